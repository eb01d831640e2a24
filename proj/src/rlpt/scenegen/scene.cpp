// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#include "rlpt/scenegen/scene.hpp"

#include <json.hpp>

namespace rlpt::scenegen {

using nlohmann::json;

namespace {

json poly_to_json(const Poly& p) { return p.coef.empty() ? json::array({0.0}) : json(p.coef); }

Poly poly_from_json(const json& j) {
  Poly p;
  if (j.is_number()) {
    p.coef = {j.get<double>()};
    return p;
  }
  for (const auto& c : j) p.coef.push_back(c.get<double>());
  return p;
}

json poly3_to_json(const Poly3& p) {
  return json{{"x", poly_to_json(p.x)}, {"y", poly_to_json(p.y)}, {"z", poly_to_json(p.z)}};
}

Poly3 poly3_from_json(const json& j) {
  if (j.is_array()) {  // static [x,y,z] shorthand
    return Poly3::constant({j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()});
  }
  return {poly_from_json(j.at("x")), poly_from_json(j.at("y")), poly_from_json(j.at("z"))};
}

json vec_to_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

Vec3 vec_from_json(const json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

void validate_albedo(const Vec3& a, const std::string& where) {
  if (a.x < 0 || a.y < 0 || a.z < 0 || a.x >= 1 || a.y >= 1 || a.z >= 1)
    throw ConfigError("albedo components must be in [0,1) at " + where);
}

}  // namespace

Scene Scene::from_json_text(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("scene JSON parse error");
  Scene s;
  s.name = j.value("name", "scene");
  s.env_radiance = vec_from_json(j.at("environment"));
  if (s.env_radiance.x < 0 || s.env_radiance.y < 0 || s.env_radiance.z < 0)
    throw ConfigError("environment radiance must be >= 0");
  const json& cam = j.at("camera");
  s.camera.position = poly3_from_json(cam.at("position"));
  s.camera.look_at = poly3_from_json(cam.at("look_at"));
  if (cam.contains("up")) s.camera.up = vec_from_json(cam.at("up"));
  s.camera.vfov_deg = cam.value("vfov_deg", 45.0);
  for (const auto& jo : j.at("objects")) {
    SceneObject o;
    const std::string kind = jo.at("kind");
    if (kind == "sphere")
      o.kind = SceneObject::Kind::kSphere;
    else if (kind == "box")
      o.kind = SceneObject::Kind::kBox;
    else
      throw ConfigError("unknown object kind: " + kind);
    o.center = poly3_from_json(jo.at("center"));
    if (o.kind == SceneObject::Kind::kSphere)
      o.radius = jo.at("radius").get<double>();
    else
      o.half_extent = vec_from_json(jo.at("half_extent"));
    const json& jm = jo.at("material");
    o.material.albedo = vec_from_json(jm.at("albedo"));
    validate_albedo(o.material.albedo, s.name + "/" + kind);
    o.material.emission = jm.contains("emission") ? vec_from_json(jm.at("emission")) : Vec3{};
    if (o.material.emission.x < 0 || o.material.emission.y < 0 || o.material.emission.z < 0)
      throw ConfigError("emission must be >= 0");
    o.material.specularity = jm.value("specularity", 0.0);
    if (o.material.specularity < 0 || o.material.specularity > 1)
      throw ConfigError("specularity must be in [0,1]");
    if (jm.contains("checker")) {
      Checker c;
      c.albedo2 = vec_from_json(jm.at("checker").at("albedo2"));
      validate_albedo(c.albedo2, s.name + "/checker");
      c.scale = jm.at("checker").value("scale", 1.0);
      o.material.checker = c;
    }
    if (jm.contains("emission_scale")) {
      // emission scale polynomial folded into emission at eval time
      o.emission_scale = poly_from_json(jm.at("emission_scale"));
    }
    s.objects.push_back(std::move(o));
  }
  return s;
}

std::string Scene::to_json_text() const {
  json j;
  j["name"] = name;
  j["environment"] = vec_to_json(env_radiance);
  j["camera"] = {{"position", poly3_to_json(camera.position)},
                 {"look_at", poly3_to_json(camera.look_at)},
                 {"up", vec_to_json(camera.up)},
                 {"vfov_deg", camera.vfov_deg}};
  json objs = json::array();
  for (const auto& o : objects) {
    json jo;
    jo["kind"] = o.kind == SceneObject::Kind::kSphere ? "sphere" : "box";
    jo["center"] = poly3_to_json(o.center);
    if (o.kind == SceneObject::Kind::kSphere)
      jo["radius"] = o.radius;
    else
      jo["half_extent"] = vec_to_json(o.half_extent);
    json jm;
    jm["albedo"] = vec_to_json(o.material.albedo);
    jm["emission"] = vec_to_json(o.material.emission);
    jm["specularity"] = o.material.specularity;
    if (o.material.checker) {
      jm["checker"] = {{"albedo2", vec_to_json(o.material.checker->albedo2)},
                       {"scale", o.material.checker->scale}};
    }
    if (!o.emission_scale.coef.empty()) jm["emission_scale"] = poly_to_json(o.emission_scale);
    jo["material"] = jm;
    objs.push_back(jo);
  }
  j["objects"] = objs;
  return j.dump(2);
}

namespace {

SceneObject sphere(Poly3 center, double radius, Material m) {
  SceneObject o;
  o.kind = SceneObject::Kind::kSphere;
  o.center = std::move(center);
  o.radius = radius;
  o.material = std::move(m);
  return o;
}

SceneObject box(Poly3 center, Vec3 he, Material m) {
  SceneObject o;
  o.kind = SceneObject::Kind::kBox;
  o.center = std::move(center);
  o.half_extent = he;
  o.material = std::move(m);
  return o;
}

Material diffuse(Vec3 albedo) { return Material{albedo, {}, 0.0, std::nullopt}; }

Material emitter(Vec3 emission) { return Material{{}, emission, 0.0, std::nullopt}; }

Scene make_box_scene() {
  Scene s;
  s.name = "box";
  s.env_radiance = {0, 0, 0};
  s.camera.position = Poly3::constant({0, 1.25, 3.8});
  s.camera.look_at = Poly3::constant({0, 1.25, 0});
  s.camera.vfov_deg = 50;
  const double R = 2.0;  // room half width
  s.objects.push_back(box(Poly3::constant({0, -0.1, 0}), {R, 0.1, R}, diffuse({0.72, 0.72, 0.72})));
  s.objects.push_back(box(Poly3::constant({0, 2.6, 0}), {R, 0.1, R}, diffuse({0.72, 0.72, 0.72})));
  s.objects.push_back(box(Poly3::constant({-R - 0.1, 1.25, 0}), {0.1, 1.45, R}, diffuse({0.75, 0.22, 0.2})));
  s.objects.push_back(box(Poly3::constant({R + 0.1, 1.25, 0}), {0.1, 1.45, R}, diffuse({0.2, 0.72, 0.25})));
  s.objects.push_back(box(Poly3::constant({0, 1.25, -R - 0.1}), {R, 1.45, 0.1}, diffuse({0.72, 0.72, 0.72})));
  s.objects.push_back(box(Poly3::constant({0, 2.45, 0}), {0.65, 0.04, 0.65}, emitter({6, 6, 6})));
  // diffuse sphere sweeping left to right and back over 40 frames
  s.objects.push_back(sphere({{{-1.0, 0.1, -0.0025}}, {{0.55}}, {{0.2}}}, 0.55,
                             diffuse({0.35, 0.4, 0.8})));
  return s;
}

Scene make_mirror_scene() {
  Scene s;
  s.name = "mirror";
  s.env_radiance = {0.9, 0.95, 1.0};
  s.camera.position = Poly3::constant({0, 1.6, 4.2});
  s.camera.look_at = Poly3::constant({0, 0.6, 0});
  s.camera.vfov_deg = 50;
  s.objects.push_back(box(Poly3::constant({0, -0.15, 0}), {6, 0.15, 6}, diffuse({0.55, 0.5, 0.45})));
  Material mirror{{0.9, 0.9, 0.9}, {}, 1.0, std::nullopt};
  s.objects.push_back(sphere({{{-1.2, 0.12, -0.003}}, {{0.8}}, {{-0.5, 0.09, -0.00225}}},
                             0.8, mirror));
  s.objects.push_back(sphere(Poly3::constant({1.3, 0.4, -0.9}), 0.4, diffuse({0.8, 0.3, 0.2})));
  return s;
}

Scene make_flicker_scene() {
  Scene s;
  s.name = "flicker";
  s.env_radiance = {0, 0, 0};
  s.camera.position = {{{0}}, {{1.25}}, {{3.8, -0.04, 0.001}}};
  s.camera.look_at = Poly3::constant({0, 1.1, 0});
  s.camera.vfov_deg = 50;
  const double R = 2.0;
  s.objects.push_back(box(Poly3::constant({0, -0.1, 0}), {R, 0.1, R}, diffuse({0.7, 0.68, 0.65})));
  s.objects.push_back(box(Poly3::constant({0, 2.6, 0}), {R, 0.1, R}, diffuse({0.7, 0.68, 0.65})));
  s.objects.push_back(box(Poly3::constant({-R - 0.1, 1.25, 0}), {0.1, 1.45, R}, diffuse({0.7, 0.68, 0.65})));
  s.objects.push_back(box(Poly3::constant({R + 0.1, 1.25, 0}), {0.1, 1.45, R}, diffuse({0.7, 0.68, 0.65})));
  s.objects.push_back(box(Poly3::constant({0, 1.25, -R - 0.1}), {R, 1.45, 0.1}, diffuse({0.7, 0.68, 0.65})));
  SceneObject light = box(Poly3::constant({-0.6, 2.45, 0}), {0.55, 0.04, 0.55},
                          emitter({1.0, 0.85, 0.6}));
  light.emission_scale = Poly{{2.0, 0.4, -0.01}};  // flicker: 2 -> 6 -> 2 over 40 frames
  s.objects.push_back(light);
  s.objects.push_back(box(Poly3::constant({0.8, 0.6, -0.5}), {0.3, 0.6, 0.3},
                          diffuse({0.72, 0.66, 0.6})));
  return s;
}

Scene make_checker_scene() {
  Scene s;
  s.name = "checker";
  s.env_radiance = {1.0, 1.0, 1.0};
  s.camera.position = {{{-1.0, 0.1, -0.0025}}, {{1.4}}, {{3.6}}};
  s.camera.look_at = {{{-1.0, 0.1, -0.0025}}, {{0.7}}, {{0}}};
  s.camera.vfov_deg = 50;
  SceneObject floor = box(Poly3::constant({0, -0.15, 0}), {8, 0.15, 8}, diffuse({0.78, 0.78, 0.78}));
  floor.material.checker = Checker{{0.22, 0.22, 0.24}, 0.75};
  s.objects.push_back(floor);
  s.objects.push_back(sphere(Poly3::constant({-0.8, 0.5, 0}), 0.5, diffuse({0.3, 0.5, 0.85})));
  s.objects.push_back(sphere(Poly3::constant({0.9, 0.35, -0.9}), 0.35, diffuse({0.85, 0.7, 0.3})));
  return s;
}

Scene make_furnace_scene() {
  Scene s;
  s.name = "furnace";
  s.env_radiance = {1, 1, 1};
  s.camera.position = Poly3::constant({0, 0, 3.5});
  s.camera.look_at = Poly3::constant({0, 0, 0});
  s.camera.vfov_deg = 45;
  s.objects.push_back(sphere(Poly3::constant({0, 0, 0}), 1.0, diffuse({0.5, 0.5, 0.5})));
  return s;
}

Scene make_emitter_scene() {
  Scene s;
  s.name = "emitter";
  s.env_radiance = {0, 0, 0};
  s.camera.position = Poly3::constant({0, 0, 3});
  s.camera.look_at = Poly3::constant({0, 0, 0});
  s.camera.vfov_deg = 45;
  s.objects.push_back(box(Poly3::constant({0, 0, 0}), {5, 5, 0.1}, emitter({2, 2, 2})));
  return s;
}

}  // namespace

Scene Scene::builtin(const std::string& name) {
  if (name == "box") return make_box_scene();
  if (name == "mirror") return make_mirror_scene();
  if (name == "flicker") return make_flicker_scene();
  if (name == "checker") return make_checker_scene();
  if (name == "furnace") return make_furnace_scene();
  if (name == "emitter") return make_emitter_scene();
  throw ConfigError("unknown builtin scene: " + name);
}

std::vector<std::string> Scene::builtin_names() {
  return {"box", "mirror", "flicker", "checker"};
}

CameraFrame make_camera(const Scene& scene, double frame, int h, int w) {
  CameraFrame cf;
  cf.h = h;
  cf.w = w;
  cf.origin = scene.camera.position.eval(frame);
  const Vec3 target = scene.camera.look_at.eval(frame);
  cf.forward = (target - cf.origin).normalized();
  cf.right = cf.forward.cross(scene.camera.up).normalized();
  cf.up = cf.right.cross(cf.forward);
  cf.tan_half_vfov = std::tan(scene.camera.vfov_deg * 0.5 * M_PI / 180.0);
  cf.tan_half_hfov = cf.tan_half_vfov * double(w) / double(h);
  return cf;
}

double scene_far_distance(const Scene& scene, double frame, const Vec3& cam_pos) {
  double far = 1.0;
  for (const auto& o : scene.objects) {
    const Vec3 c = o.center.eval(frame);
    const Vec3 he = o.kind == SceneObject::Kind::kSphere
                        ? Vec3{o.radius, o.radius, o.radius}
                        : o.half_extent;
    for (int corner = 0; corner < 8; ++corner) {
      const Vec3 p{c.x + ((corner & 1) ? he.x : -he.x),
                   c.y + ((corner & 2) ? he.y : -he.y),
                   c.z + ((corner & 4) ? he.z : -he.z)};
      far = std::max(far, (p - cam_pos).norm());
    }
  }
  return far;
}

}  // namespace rlpt::scenegen

// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#include "rlpt/scenegen/tracer.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "rlpt/rng.hpp"

namespace rlpt::scenegen {

namespace {

constexpr double kRayEps = 1e-7;
constexpr int kMaxDepth = 8;
constexpr int kRouletteDepth = 3;

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  int object = -1;
  Vec3 p;
  Vec3 n;  // geometric outward normal
};

bool intersect_sphere(const Vec3& ro, const Vec3& rd, const Vec3& c, double r, double& t) {
  const Vec3 oc = ro - c;
  const double b = oc.dot(rd);
  const double disc = b * b - (oc.dot(oc) - r * r);
  if (disc < 0) return false;
  const double s = std::sqrt(disc);
  double t0 = -b - s;
  if (t0 > kRayEps) {
    t = t0;
    return true;
  }
  t0 = -b + s;
  if (t0 > kRayEps) {
    t = t0;
    return true;
  }
  return false;
}

bool intersect_box(const Vec3& ro, const Vec3& rd, const Vec3& c, const Vec3& he,
                   double& t, Vec3& n) {
  const Vec3 lo = c - he, hi = c + he;
  double tmin = -std::numeric_limits<double>::infinity();
  double tmax = std::numeric_limits<double>::infinity();
  int axis_min = -1, axis_max = -1;
  const double o[3] = {ro.x, ro.y, ro.z};
  const double d[3] = {rd.x, rd.y, rd.z};
  const double l[3] = {lo.x, lo.y, lo.z};
  const double h[3] = {hi.x, hi.y, hi.z};
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (o[a] < l[a] || o[a] > h[a]) return false;
      continue;
    }
    double t1 = (l[a] - o[a]) / d[a];
    double t2 = (h[a] - o[a]) / d[a];
    int sign = -1;  // entering through the low face
    if (t1 > t2) {
      std::swap(t1, t2);
      sign = 1;
    }
    if (t1 > tmin) {
      tmin = t1;
      axis_min = a * 2 + (sign < 0 ? 0 : 1);
    }
    if (t2 < tmax) {
      tmax = t2;
      axis_max = a * 2 + (sign < 0 ? 1 : 0);
    }
    if (tmin > tmax) return false;
  }
  double tt;
  int face;
  if (tmin > kRayEps) {
    tt = tmin;
    face = axis_min;
  } else if (tmax > kRayEps) {
    tt = tmax;
    face = axis_max;
  } else {
    return false;
  }
  t = tt;
  static const Vec3 face_n[6] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0},
                                 {0, 1, 0},  {0, 0, -1}, {0, 0, 1}};
  n = face_n[face];
  return true;
}

Hit intersect_scene(const Scene& scene, double frame, const Vec3& ro, const Vec3& rd) {
  Hit best;
  for (int k = 0; k < int(scene.objects.size()); ++k) {
    const SceneObject& o = scene.objects[std::size_t(k)];
    const Vec3 c = o.center.eval(frame);
    double t;
    if (o.kind == SceneObject::Kind::kSphere) {
      if (intersect_sphere(ro, rd, c, o.radius, t) && t < best.t) {
        best.t = t;
        best.object = k;
        best.p = ro + rd * t;
        best.n = (best.p - c) / o.radius;
      }
    } else {
      Vec3 n;
      if (intersect_box(ro, rd, c, o.half_extent, t, n) && t < best.t) {
        best.t = t;
        best.object = k;
        best.p = ro + rd * t;
        best.n = n;
      }
    }
  }
  return best;
}

Vec3 cosine_hemisphere(const Vec3& n, double u1, double u2) {
  // orthonormal basis around n
  const Vec3 a = std::abs(n.x) > 0.9 ? Vec3{0, 1, 0} : Vec3{1, 0, 0};
  const Vec3 t = n.cross(a).normalized();
  const Vec3 b = n.cross(t);
  const double r = std::sqrt(u1);
  const double phi = 6.283185307179586 * u2;
  const double zl = std::sqrt(std::max(0.0, 1.0 - u1));
  return (t * (r * std::cos(phi)) + b * (r * std::sin(phi)) + n * zl).normalized();
}

}  // namespace

Vec3 trace_sample(const Scene& scene, int frame, int i, int j, int sample_index,
                  std::uint64_t seed, int h, int w) {
  KeyedRng rng{seed, std::uint64_t(frame), std::uint64_t(i), std::uint64_t(j),
               std::uint64_t(sample_index)};
  const CameraFrame cam = make_camera(scene, frame, h, w);
  Vec3 ro, rd;
  cam.ray(j + rng.next_double(), i + rng.next_double(), ro, rd);

  Vec3 radiance{0, 0, 0};
  Vec3 throughput{1, 1, 1};
  for (int depth = 0; depth < kMaxDepth; ++depth) {
    const Hit hit = intersect_scene(scene, frame, ro, rd);
    if (hit.object < 0) {
      radiance += throughput * scene.env_radiance;
      break;
    }
    const SceneObject& obj = scene.objects[std::size_t(hit.object)];
    radiance += throughput * obj.emission_at(frame);

    const Vec3 albedo = obj.albedo_at(hit.p);
    if (albedo.max_component() <= 0 && obj.material.specularity <= 0) break;

    if (depth >= kRouletteDepth) {
      const double p_cont = std::clamp(throughput.max_component(), 0.05, 0.95);
      if (rng.next_double() >= p_cont) break;
      throughput = throughput / p_cont;
    }

    // shading normal faces the incoming ray (boxes/spheres can be hit from inside)
    const Vec3 ns = hit.n.dot(rd) < 0 ? hit.n : hit.n * -1.0;
    const bool mirror =
        obj.material.specularity > 0 && (obj.material.specularity >= 1.0 ||
                                         rng.next_double() < obj.material.specularity);
    if (mirror) {
      rd = rd - ns * (2.0 * rd.dot(ns));
      throughput *= albedo;
    } else {
      const double u1 = rng.next_double();
      const double u2 = rng.next_double();
      rd = cosine_hemisphere(ns, u1, u2);
      throughput *= albedo;  // brdf * cos / pdf collapses to the albedo
    }
    ro = hit.p + ns * kRayEps;
    if (throughput.max_component() <= 0) break;
  }
  return radiance;
}

AuxBuffers render_aux(const Scene& scene, int frame, int h, int w) {
  AuxBuffers aux;
  aux.normal = io::Image(h, w, 3);
  aux.albedo = io::Image(h, w, 3);
  aux.depth = io::Image(h, w, 1);
  aux.motion = io::Image(h, w, 2);

  const CameraFrame cam = make_camera(scene, frame, h, w);
  const int prev_frame = std::max(frame - 1, 0);
  const CameraFrame prev_cam = make_camera(scene, prev_frame, h, w);
  const double far = scene_far_distance(scene, frame, cam.origin);

#pragma omp parallel for schedule(static)
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      Vec3 ro, rd;
      cam.ray(j + 0.5, i + 0.5, ro, rd);
      const Hit hit = intersect_scene(scene, frame, ro, rd);
      Vec3 prev_point;
      if (hit.object < 0) {
        aux.depth.at(0, i, j) = 1.0f;
        prev_point = ro + rd * 1e6;  // direction-only reprojection for sky
      } else {
        const SceneObject& obj = scene.objects[std::size_t(hit.object)];
        const Vec3 ns = hit.n.dot(rd) < 0 ? hit.n : hit.n * -1.0;
        aux.normal.at(0, i, j) = float(ns.x);
        aux.normal.at(1, i, j) = float(ns.y);
        aux.normal.at(2, i, j) = float(ns.z);
        const Vec3 alb = obj.albedo_at(hit.p);
        aux.albedo.at(0, i, j) = float(alb.x);
        aux.albedo.at(1, i, j) = float(alb.y);
        aux.albedo.at(2, i, j) = float(alb.z);
        aux.depth.at(0, i, j) = float(std::min(hit.t / far, 1.0));
        // follow the surface point through the object's translation
        prev_point = hit.p - obj.center.eval(frame) + obj.center.eval(prev_frame);
      }
      double px, py;
      if (prev_cam.project(prev_point, px, py)) {
        aux.motion.at(0, i, j) = float(px - (j + 0.5));
        aux.motion.at(1, i, j) = float(py - (i + 0.5));
      } else {
        aux.motion.at(0, i, j) = float(2 * w);  // off-frame: history invalid
        aux.motion.at(1, i, j) = float(2 * h);
      }
    }
  }
  return aux;
}

io::Image render_reference(const Scene& scene, int frame, int spp, std::uint64_t seed,
                           int h, int w) {
  if (spp < 1) throw ConfigError("render_reference: spp must be >= 1");
  io::Image img(h, w, 3);
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      Vec3 acc;
      for (int s = 0; s < spp; ++s) acc += trace_sample(scene, frame, i, j, s, seed, h, w);
      acc = acc / double(spp);
      img.at(0, i, j) = float(acc.x);
      img.at(1, i, j) = float(acc.y);
      img.at(2, i, j) = float(acc.z);
    }
  }
  return img;
}

}  // namespace rlpt::scenegen

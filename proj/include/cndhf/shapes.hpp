#pragma once

#include <functional>

#include "cndhf/mesh.hpp"

/// Procedural closed meshes used as analytic fixtures by the tests, the
/// acceptance suite and the `fixture` CLI subcommand.
namespace cndhf::shapes {

/// Geodesic sphere: subdivided icosahedron with vertices projected to `radius`.
TriangleMesh icosphere(double radius, int subdivisions);

/// Axis-aligned box with outward-facing triangles (12 triangles).
TriangleMesh box(const Vec3& lo, const Vec3& hi);

/// Torus around the z axis; `major` rings along the tube path, `minor` around the tube.
TriangleMesh torus(double major_radius, double minor_radius, int major, int minor);

/// Boundary of a union of grid cells: one quad per exposed cell face.
/// Cell (i,j,k) spans origin + cell * [i,i+1] x [j,j+1] x [k,k+1].
TriangleMesh voxel_solid(int nx, int ny, int nz, const Vec3& origin, double cell,
                         const std::function<bool(int, int, int)>& occupied);

/// Two perpendicular plates, each with a rectangular window, interlocked like
/// chain links. No single candidate direction sees the whole surface; two do.
TriangleMesh plus_solid();

}  // namespace cndhf::shapes

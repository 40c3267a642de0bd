#pragma once

#include "ncs/body.hpp"
#include "ncs/energy.hpp"

#include <vector>

namespace ncs {

// A garment bound to a body: the unit every simulator and network works on.
struct Scene {
    BodyModel body;
    ClothModel cloth;
    BoundWeights garment_weights;

    const Skeleton& skeleton() const { return body.skeleton; }
    int num_vertices() const { return cloth.num_vertices(); }
};

// Garments without weights inherit them from the nearest body vertex.
Scene make_scene(BodyModel body, GarmentMesh garment);

// Per-vertex LBS maps of the garment for a set of joint globals.
std::vector<VertexSkin> garment_skin(const Scene& scene, const std::vector<RigidTransform>& globals);

// Garment rest vertices (plus an optional rest-space displacement) skinned to a pose.
Positions skin_garment(const Scene& scene, const Pose& pose, const Positions* displacement = nullptr);

// Gravity energy of the undeformed skinned garment at a pose; reference for the gravity metric.
double gravity_reference(const Scene& scene, const Pose& pose);

}  // namespace ncs

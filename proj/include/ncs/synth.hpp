#pragma once

#include "ncs/body.hpp"
#include "ncs/mesh.hpp"
#include "ncs/scene.hpp"

#include <cstdint>
#include <vector>

namespace ncs::synth {

// nx * nz vertices in the y = 0 plane spanning [0, width] x [0, depth], uv = (x, z).
ObjData grid(int nx, int nz, double width, double depth);

// Open tube around the z axis, centred on the origin. No uvs (per-face unfold).
ObjData tube(int around, int along, double radius, double length);

// Closed, outward-oriented cylinder around the z axis, centred on the origin.
ObjData capped_cylinder(int around, int along, double radius, double length);

// root -> pivot (1 m up) -> arm (0.3 m down) -> bar (0.3 m down). The bar is a
// horizontal rod along z; mirror plane is x = 0.
Skeleton pendulum_skeleton();

struct PendulumOptions {
    int loop_around = 20;
    int loop_along = 10;
    double loop_radius = 0.08;
    double loop_length = 0.3;
    double bar_radius = 0.025;
    double bar_length = 0.5;
    double clearance = 0.006;  // gap between the loop's top and the bar at rest
};

BodyModel pendulum_body(const PendulumOptions& opts = {});
// Loop hanging on the bar, weights transferred from the body.
GarmentMesh pendulum_garment(const FabricParams& fabric, const PendulumOptions& opts = {});
Scene pendulum_scene(const FabricParams& fabric, const PendulumOptions& opts = {});

// Garment of roughly target_dofs / 3 vertices on the pendulum body.
Scene dense_scene(int target_dofs, const FabricParams& fabric);

// Motion families, used as the "action" of each sequence. Swings start held at
// their release angle for 0.4 s; "still" holds one pose.
inline constexpr const char* kActions[] = {"swing", "spin", "jump", "still", "mixed"};

PoseSequence pendulum_motion(const Skeleton& skel, const std::string& action, int frames, double fps,
                             std::uint64_t seed);

// Round-robin over the actions until total_frames are covered, frames_per_sequence each.
std::vector<PoseSequence> pendulum_dataset(const Skeleton& skel, int total_frames, int frames_per_sequence,
                                           double fps, std::uint64_t seed);

}  // namespace ncs::synth

#include "ncs/scene.hpp"

namespace ncs {

Scene make_scene(BodyModel body, GarmentMesh garment) {
    if (garment.blend_weights.empty())
        garment.blend_weights = transfer_weights(garment.vertices, body.rest_vertices, body.weight_rows);
    Scene scene;
    scene.garment_weights = bind_weights(garment.blend_weights, body.skeleton);
    scene.cloth = ClothModel::build(std::move(garment));
    scene.body = std::move(body);
    return scene;
}

std::vector<VertexSkin> garment_skin(const Scene& scene, const std::vector<RigidTransform>& globals) {
    return blend_skinning(scene.garment_weights, skinning_transforms(globals, scene.body.rest));
}

Positions skin_garment(const Scene& scene, const Pose& pose, const Positions* displacement) {
    const auto skin = garment_skin(scene, forward_kinematics(scene.skeleton(), pose));
    if (!displacement) return apply_skinning(skin, scene.cloth.mesh.vertices);
    if (displacement->rows() != scene.num_vertices())
        throw ShapeError("displacement row count does not match the garment");
    return apply_skinning(skin, scene.cloth.mesh.vertices + *displacement);
}

double gravity_reference(const Scene& scene, const Pose& pose) {
    return gravity_energy(skin_garment(scene, pose), scene.cloth.masses, nullptr);
}

}  // namespace ncs

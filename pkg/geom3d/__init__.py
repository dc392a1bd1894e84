"""Rigid-body geometry, projection, pose solvers and rotation averaging"""
from geom3d.camera import (back_project, bearing_vectors, depths, project, project_points,
                           reprojection_errors, reprojection_rms)
from geom3d.rotation import (angle_to_frobenius, average_poses, frobenius_to_angle, kabsch,
                             project_so3, rotation_angle_between)
from geom3d.solvers import p3p, pnp
from geom3d.types import (CameraIntrinsics, ObjectModel, Pose, Rotation3, load_intrinsics,
                          load_object_model, load_pose, pose_to_vector, rotation_indices,
                          vector_to_pose)

__all__ = [
    "CameraIntrinsics", "ObjectModel", "Pose", "Rotation3",
    "angle_to_frobenius", "average_poses", "back_project", "bearing_vectors", "depths",
    "frobenius_to_angle", "kabsch", "load_intrinsics", "load_object_model", "load_pose",
    "p3p", "pnp", "pose_to_vector", "project", "project_points", "project_so3",
    "reprojection_errors", "reprojection_rms", "rotation_angle_between", "rotation_indices",
    "vector_to_pose",
]

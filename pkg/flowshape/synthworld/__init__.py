"""Procedural scenes, cameras, rendering, simulated SLAM points and perception oracles"""

from .scene import SceneConfig, SceneObject, SceneSpec, generate_scene, random_primitive
from .camera import Camera, CameraFrame, Intrinsics, TrajectoryConfig, generate_trajectory, look_at
from .render import RenderConfig, RenderedView, render_frame
from .slam import PointCloudTrack, SlamConfig, simulate_slam_points
from .oracles import (VOCABULARY, JitterConfig, ObjectInstance, OrientedBox, caption_object,
                      detect_instances_oracle, project_point_mask, tokenize_caption)
from .recording import Recording, load_recording, save_recording, simulate_capture

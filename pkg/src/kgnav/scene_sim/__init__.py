"""Deterministic symbolic indoor-scene simulator."""

from .env import (
    ACTION_INDEX,
    ACTIONS,
    N_ACTIONS,
    OPEN,
    STOP,
    EpisodeFinishedError,
    EpisodeState,
    goal_distance,
    observe,
    reset,
    shortest_path_length,
    start_at,
    step,
    visible_objects,
)
from .generator import DEFAULT_VOCABULARY, GeneratorConfig, generate_scene, make_vocabulary
from .io import SceneParseError, format_scene, load_scene, parse_scene, save_scene
from .scene import HEADINGS, LEVELS, PITCHES, ObjectInstance, Observation, Pose, Scene, SceneError, TargetSpec

__all__ = [
    "ACTIONS", "ACTION_INDEX", "N_ACTIONS", "OPEN", "STOP",
    "EpisodeFinishedError", "EpisodeState", "GeneratorConfig", "DEFAULT_VOCABULARY",
    "HEADINGS", "LEVELS", "PITCHES", "ObjectInstance", "Observation", "Pose", "Scene",
    "SceneError", "SceneParseError", "TargetSpec",
    "format_scene", "generate_scene", "goal_distance", "load_scene", "make_vocabulary", "observe",
    "parse_scene", "reset", "save_scene", "shortest_path_length", "start_at", "step", "visible_objects",
]

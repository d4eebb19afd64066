"""Highway lane-change decision making with DQN variants and intention features."""

from .agent import AgentConfig, DqnAgent, ReplayBuffer, TargetBank, Transition
from .env import Action, EnvConfig, HighwayEnv, Observation, RewardConfig, SpawnConfig, StepResult
from .idm import IdmParams, acceleration, desired_gap
from .intention import Intention, NoiseConfig, degrade, ground_truth_ttlc
from .net import Network
from .optim import Adam
from .synth import LaneChangeEvent, SynthConfig, generate_synthetic
from .tracks import LaneGeometry, TrackSet, parse_tracks, serialize_tracks, validate
from .training import run_training

__version__ = "0.1.0"

__all__ = [
    "Action",
    "Adam",
    "AgentConfig",
    "DqnAgent",
    "EnvConfig",
    "HighwayEnv",
    "IdmParams",
    "Intention",
    "LaneChangeEvent",
    "LaneGeometry",
    "Network",
    "NoiseConfig",
    "Observation",
    "ReplayBuffer",
    "RewardConfig",
    "SpawnConfig",
    "StepResult",
    "SynthConfig",
    "TargetBank",
    "TrackSet",
    "Transition",
    "acceleration",
    "degrade",
    "desired_gap",
    "generate_synthetic",
    "ground_truth_ttlc",
    "parse_tracks",
    "run_training",
    "serialize_tracks",
    "validate",
]

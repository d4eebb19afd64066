"""Flat key-value experiment configuration.

Files hold one `section.key = value` pair per line, `#` comments allowed.
Values stay strings until a typed accessor pulls them out; unknown keys are
rejected up front so typos fail fast. The full key set is documented in
docs/config_schema.md.
"""
from __future__ import annotations

from .idm import IdmParams
from .tracks import LaneGeometry


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, str] = {
    "geometry.lane_width": "3.5",
    "geometry.track_length": "420.0",
    "data.dt": "0.1",
    "synth.vehicle_count": "12",
    "synth.speed_min": "20.0",
    "synth.speed_max": "30.0",
    "synth.duration_s": "60.0",
    "synth.spawn_rate_per_s": "0.0",
    "synth.initial_count": "",
    "synth.min_spawn_gap": "12.0",
    "synth.vehicle_length": "5.0",
    "synth.vehicle_width": "2.0",
    "synth.lane_change_events": "",
    "synth.random_lane_changes": "0",
    "synth.random_lc_duration": "2.0",
    "synth.track_count": "30",
    "idm.s0": "5.0",
    "idm.v_desired_kmh": "130.0",
    "idm.a_max": "3.0",
    "idm.b_max": "5.0",
    "idm.b_safe": "4.0",
    "idm.rho": "0.25",
    "env.decision_interval": "1.0",
    "env.physics_dt": "0.1",
    "env.lane_change_duration": "1.0",
    "env.radar_range": "250.0",
    "env.obs_mode": "base",
    "env.penalize_masked_actions": "false",
    "env.ego_length": "5.0",
    "env.ego_width": "2.0",
    "reward.r_end_of_track": "10.0",
    "reward.r_lane_change": "0.1",
    "reward.r_collision": "10.0",
    "intention.mode": "ground_truth",
    "intention.horizon": "5.0",
    "intention.class_flip_rate": "0.0",
    "intention.ttlc_sigma": "0.0",
    "agent.variant": "dqn",
    "agent.gamma": "0.95",
    "agent.alpha": "1e-5",
    "agent.eps_start": "1.0",
    "agent.eps_min": "0.01",
    "agent.eps_decay": "0.9995",
    "agent.batch_size": "32",
    "agent.buffer_capacity": "10000",
    "agent.target_sync_interval": "1000",
    "agent.averaged_k": "5",
    "net.hidden": "128,128",
    "net.activation": "relu",
    "net.noisy_all_layers": "false",
    "spawn.lane": "",
    "spawn.x": "",
    "spawn.v": "",
    "spawn.x_min": "0.0",
    "spawn.x_max": "60.0",
    "spawn.v_min": "20.0",
    "spawn.v_max": "33.0",
    "experiment.master_seed": "0",
    "experiment.seeds": "1,2,3,4,5",
    "experiment.eval_runs": "45",
    "experiment.arms": "base,ground_truth",
    "experiment.variants": "dqn",
    "experiment.train_tracks": "0-14",
    "experiment.test_tracks": "15-29",
    "experiment.episodes": "7000",
    "experiment.tracks_dir": "tracks",
    "train.nan_injection_step": "",  # testing hook: force exit 4 at this step
}


def parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = value.strip()
    return out


class Config:
    """Defaults overlaid with a parsed file; typed accessors validate lazily."""

    def __init__(self, overrides: dict[str, str] | None = None):
        for key in overrides or {}:
            if key not in DEFAULTS:
                raise ConfigError(f"unknown key {key!r}")
        self._values = {**DEFAULTS, **(overrides or {})}

    @classmethod
    def from_file(cls, path) -> "Config":
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls(parse_config_text(text))

    def raw(self) -> dict[str, str]:
        return dict(self._values)

    def __getitem__(self, key: str) -> str:
        return self._values[key]

    def get_float(self, key: str) -> float:
        try:
            return float(self._values[key])
        except ValueError:
            raise ConfigError(f"{key} must be a number, got {self._values[key]!r}") from None

    def get_int(self, key: str) -> int:
        try:
            return int(self._values[key])
        except ValueError:
            raise ConfigError(f"{key} must be an integer, got {self._values[key]!r}") from None

    def get_bool(self, key: str) -> bool:
        value = self._values[key].lower()
        if value in ("true", "1", "yes"):
            return True
        if value in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key} must be a boolean, got {self._values[key]!r}")

    def get_optional_float(self, key: str) -> float | None:
        return None if self._values[key] == "" else self.get_float(key)

    def get_optional_int(self, key: str) -> int | None:
        return None if self._values[key] == "" else self.get_int(key)

    def get_list(self, key: str) -> list[str]:
        value = self._values[key]
        return [item.strip() for item in value.split(",") if item.strip()]

    def get_int_list(self, key: str) -> list[int]:
        """Comma list with `a-b` range expansion, e.g. '0-4,7' -> [0,1,2,3,4,7]."""
        out: list[int] = []
        for item in self.get_list(key):
            if "-" in item[1:]:
                lo, hi = item.split("-", 1)
                try:
                    out.extend(range(int(lo), int(hi) + 1))
                except ValueError:
                    raise ConfigError(f"{key}: bad range {item!r}") from None
            else:
                try:
                    out.append(int(item))
                except ValueError:
                    raise ConfigError(f"{key}: bad integer {item!r}") from None
        return out

    # -- composite builders -------------------------------------------------

    def geometry(self) -> LaneGeometry:
        return LaneGeometry(
            lane_width=self.get_float("geometry.lane_width"),
            track_length=self.get_float("geometry.track_length"),
        )

    def idm(self) -> IdmParams:
        return IdmParams(
            s0=self.get_float("idm.s0"),
            v_desired=self.get_float("idm.v_desired_kmh") / 3.6,
            a_max=self.get_float("idm.a_max"),
            b_max=self.get_float("idm.b_max"),
            b_safe=self.get_float("idm.b_safe"),
            rho=self.get_float("idm.rho"),
        )

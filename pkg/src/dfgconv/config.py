"""Run configuration: a versioned JSON document plus the calibration solvers
that fill its ``null`` entries.

Values in the document use lab units (mW, ps, Hz); the loader converts to the
SI-style units of the model classes (W for pump power, Hz/W for the Raman
coefficient) and reports errors as ``path.to.field (line N): message``.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from . import conversion as cv
from . import detection as det
from . import experiment as ex
from . import quantum as qc
from .exceptions import ConfigError, ValidationError

SCHEMA_VERSION = 1
SCENARIOS = ("initial", "converted-AS", "converted-SS")


def default_config_text():
    return resources.files("dfgconv").joinpath("data/default_config.json").read_text()


def _line_of(text, path):
    """Best-effort line number of ``path`` (dotted keys) in JSON ``text``."""
    pos = 0
    for key in path.split("."):
        hit = text.find(f'"{key}"', pos)
        if hit < 0:
            return None
        pos = hit + 1
    return text.count("\n", 0, pos) + 1


class _Reader:
    def __init__(self, doc, text):
        self.doc = doc
        self.text = text

    def fail(self, path, message):
        line = _line_of(self.text, path) if self.text else None
        where = f"{path} (line {line})" if line else path
        raise ConfigError(where, message)

    def node(self, path):
        cur = self.doc
        for key in path.split("."):
            if not isinstance(cur, dict) or key not in cur:
                self.fail(path, "missing required field")
            cur = cur[key]
        return cur

    def section(self, path):
        val = self.node(path)
        if not isinstance(val, dict):
            self.fail(path, "expected an object")
        return val

    def number(self, path, lo=None, hi=None, lo_open=False, nullable=False, default=...):
        try:
            val = self.node(path)
        except ConfigError:
            if default is ...:
                raise
            return default
        if val is None:
            if nullable:
                return None
            self.fail(path, "must not be null")
        if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
            self.fail(path, f"expected a finite number, got {val!r}")
        if lo is not None and (val <= lo if lo_open else val < lo):
            self.fail(path, f"must be {'>' if lo_open else '>='} {lo}, got {val!r}")
        if hi is not None and val > hi:
            self.fail(path, f"must be <= {hi}, got {val!r}")
        return float(val)


@dataclass
class RunConfig:
    document: dict
    text: str
    conversion: cv.ConversionParams
    tdc: det.TdcConfig
    interferometer: ex.InterferometerSpec
    detectors: dict
    scenarios: dict
    pairings: dict
    workflows: dict
    jitters: dict = field(default_factory=dict)
    rate_calibration: ex.RateCalibration = None
    source: str = "<default>"

    @property
    def sha256(self):
        canon = json.dumps(self.document, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def workflow(self, name):
        return dict(self.workflows.get(name, {}))

    def detector(self, label):
        if label not in self.detectors:
            known = ", ".join(sorted(self.detectors))
            raise ConfigError(f"detectors.{label}", f"unknown detector (known: {known})")
        return self.detectors[label]


def load_config(path=None):
    """Load, validate and calibrate a configuration (bundled default if ``path`` is None)."""
    if path is None:
        text, source = default_config_text(), "<default>"
    else:
        text, source = Path(path).read_text(), str(path)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"<document> (line {exc.lineno})", exc.msg) from exc
    cfg = parse_config(doc, text)
    cfg.source = source
    return cfg


def parse_config(doc, text=""):
    r = _Reader(doc, text)
    version = r.node("schema_version")
    if version != SCHEMA_VERSION:
        r.fail("schema_version", f"unsupported schema version {version!r} (expected {SCHEMA_VERSION})")

    conversion = cv.ConversionParams(
        eta_tau_sq=r.number("conversion.eta_tau_sq_per_W", lo=0, lo_open=True),
        pump_power=r.number("conversion.pump_power_mW", lo=0) * 1e-3,
        pump_phase=r.number("conversion.pump_phase_rad", default=0.0),
        raman_coeff=r.number("conversion.raman_coeff_Hz_per_mW", lo=0) * 1e3,
        dark_rate=r.number("conversion.dark_rate_Hz", lo=0),
    )
    tdc = det.TdcConfig(
        bin_width=r.number("tdc.bin_width_ps", lo=0, lo_open=True),
        window_width=r.number("tdc.window_width_ps", lo=0, lo_open=True),
        window_center=r.number("tdc.window_center_ps", default=0.0),
    )
    interf = ex.InterferometerSpec(
        delay=r.number("interferometer.delay_ps", lo=0, lo_open=True),
        postselect_success=r.number("interferometer.postselect_success", lo=0, hi=1, lo_open=True),
    )
    tp_vis = r.number("throughput.visible", lo=0, hi=1, lo_open=True)
    tp_tel = r.number("throughput.telecom", lo=0, hi=1, lo_open=True)

    jitters = det.calibrate_jitters(
        r.number("jitter_calibration.apd_apd_fwhm_ps", lo=0, lo_open=True),
        r.number("jitter_calibration.apd_sspd_fwhm_ps", lo=0, lo_open=True),
        r.number("jitter_calibration.sspd_sspd_fwhm_ps", lo=0, lo_open=True),
    )
    jitter_key = {"si_apd": "si_apd", "ingaas_apd": "ingaas_apd",
                  "sspd_visible": "sspd", "sspd_telecom": "sspd"}

    raw_det = {}
    for label in r.section("detectors"):
        base = f"detectors.{label}"
        raw_det[label] = {
            "efficiency": r.number(f"{base}.efficiency", lo=0, hi=1, nullable=True),
            "dark_rate": r.number(f"{base}.dark_rate_Hz", lo=0, nullable=True),
            "jitter_fwhm": r.number(f"{base}.jitter_fwhm_ps", lo=0, lo_open=True, nullable=True),
        }
        if raw_det[label]["jitter_fwhm"] is None:
            if label not in jitter_key:
                r.fail(f"{base}.jitter_fwhm_ps", "null is only solvable for the four calibrated detectors")
            raw_det[label]["jitter_fwhm"] = jitters[jitter_key[label]]
    for label in ("si_apd", "sspd_visible", "sspd_telecom"):
        if label not in raw_det:
            r.fail(f"detectors.{label}", "missing required detector")

    def spec(label):
        vals = raw_det[label]
        for key in ("efficiency", "dark_rate"):
            if vals[key] is None:
                r.fail(f"detectors.{label}.{key}", "null but not solvable by calibration")
        try:
            return det.DetectorSpec(label, **vals)
        except ValidationError as exc:
            r.fail(f"detectors.{label}", str(exc))

    targets = {}
    for name in ("converted-SS", "converted-AS"):
        total = r.number(f"rate_targets.{name}.total_Hz", lo=0, lo_open=True)
        noise = r.number(f"rate_targets.{name}.noise_Hz", lo=0, lo_open=True)
        if noise >= total:
            r.fail(f"rate_targets.{name}.noise_Hz", "noise rate must be below the total rate")
        targets[name] = (total - noise, noise)

    apd_jitter = raw_det["si_apd"]["jitter_fwhm"]
    try:
        cal = ex.calibrate_rates(conversion, tdc, spec("sspd_visible"), spec("sspd_telecom"),
                                 apd_jitter, tp_vis, tp_tel, interf.postselect_success,
                                 targets["converted-SS"], targets["converted-AS"])
    except ValidationError as exc:
        r.fail("rate_targets", str(exc))
    if raw_det["si_apd"]["efficiency"] is None:
        raw_det["si_apd"]["efficiency"] = cal.apd_efficiency
    if raw_det["si_apd"]["dark_rate"] is None:
        raw_det["si_apd"]["dark_rate"] = cal.apd_dark_rate
    detectors = {label: spec(label) for label in raw_det}

    fidelity0 = r.number("source.initial_fidelity", lo=0.25, hi=1.0)
    initial = qc.mix_with_white_noise(qc.pure_density(qc.bell_phi_plus()), 4.0 * (1.0 - fidelity0) / 3.0)
    try:
        source = ex.SourceSpec(
            rep_rate=r.number("source.rep_rate_Hz", lo=0, lo_open=True),
            pair_coincidence_rate=r.number("source.pair_coincidence_rate_Hz", lo=0, lo_open=True,
                                           default=cal.pair_coincidence_rate),
            initial_state=initial,
            initial_detection_rate=r.number("source.initial_detection_rate_Hz", lo=0),
            visible_flux=r.number("source.visible_flux_Hz", lo=0, default=cal.visible_flux),
        )
    except ValidationError as exc:
        r.fail("source", str(exc))

    scenarios = {}
    for name, body in r.section("scenarios").items():
        base = f"scenarios.{name}"
        dv, dt = r.node(f"{base}.det_visible"), r.node(f"{base}.det_telecom")
        for key, lab in (("det_visible", dv), ("det_telecom", dt)):
            if lab not in detectors:
                r.fail(f"{base}.{key}", f"unknown detector {lab!r}")
        converted = r.node(f"{base}.converted")
        if not isinstance(converted, bool):
            r.fail(f"{base}.converted", "expected true or false")
        scen = ex.ExperimentConfig(
            source=source, det_visible=detectors[dv], det_telecom=detectors[dt],
            conversion=conversion if converted else None, encoder=interf, decoder=interf,
            tdc=tdc, throughput_visible=tp_vis, throughput_telecom=tp_tel, name=name)
        if converted:
            scen = replace(scen, conversion=replace(conversion, signal_scale=ex.signal_scale(scen)))
        scenarios[name] = scen

    pairings = {}
    for name, pair in r.section("pairings").items():
        if not (isinstance(pair, list) and len(pair) == 2 and all(p in detectors for p in pair)):
            r.fail(f"pairings.{name}", "expected two configured detector labels")
        pairings[name] = tuple(pair)

    workflows = r.section("workflows")
    if "converted-SS" in scenarios:
        conversion = scenarios["converted-SS"].conversion
    return RunConfig(doc, text, conversion, tdc, interf, detectors, scenarios, pairings,
                     workflows, jitters, cal)

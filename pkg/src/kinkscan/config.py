"""
Flat text configuration for the command-line tools.

Each non-blank line is ``section.key = value``; ``#`` starts a comment.
Unknown keys, duplicate keys and malformed values are rejected with the
offending line number.  Every key except ``design.assumption`` has a
default, listed in ``SCHEMA``.
"""
import hashlib
from dataclasses import dataclass

from .errors import ConfigError, KinkScanError
from .estimator import EstimatorConfig
from .lrd import LinearProcessSpec
from .scenario import (DesignA, DesignB, KinkFunction, ScaleSpec, Scenario,
                       SmoothPart)

SEED_LIMIT = 2 ** 64
REQUIRED = ("design.assumption",)


def fmt_float(x):
    """Shortest text that reads back to the same 64-bit float (at most 17 digits)."""
    return repr(float(x))


# -- value codecs: (parse(text) -> value, dump(value) -> text) --------------

def _int(text):
    return int(text)


def _float(text):
    v = float(text)
    if v != v or v in (float("inf"), float("-inf")):
        raise ValueError("must be finite")
    return v


def _bool(text):
    t = text.lower()
    if t in ("true", "yes", "1"):
        return True
    if t in ("false", "no", "0"):
        return False
    raise ValueError("expected true or false")


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    return parse


def _auto(parse):
    return lambda text: None if text == "auto" else parse(text)


def _float_list(text):
    return tuple(_float(p) for p in text.split(",") if p.strip()) if text.strip() else ()


def _int_list(text):
    return tuple(int(p) for p in text.split(",") if p.strip()) if text.strip() else ()


def _kinks(text):
    """``theta:jump, theta:jump`` pairs."""
    out = []
    for part in (p.strip() for p in text.split(",")):
        if not part:
            continue
        theta, _, jump = part.partition(":")
        if not _:
            raise ValueError(f"kink {part!r} must be written theta:jump")
        out.append((_float(theta), _float(jump)))
    return tuple(out)


def _seed(text):
    v = int(text)
    if not 0 <= v < SEED_LIMIT:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return v


def _dump(value):
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return fmt_float(value)
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ", ".join(f"{fmt_float(a)}:{fmt_float(b)}" for a, b in value)
        return ", ".join(_dump(v) for v in value)
    return str(value)


# key -> (parser, default, description)
SCHEMA = {
    "run.seed": (_seed, 0, "master seed, unsigned 64-bit"),
    "design.assumption": (_choice("A", "B"), None,
                          "A: i.i.d. design, LRD errors; B: Gaussian LRD design, i.i.d. errors"),
    "design.law": (_choice("uniform01", "beta"), "uniform01", "i.i.d. design law under A"),
    "design.params": (_float_list, (), "beta parameters p, q under A"),
    "design.error_law": (_choice("gaussian", "uniform"), "gaussian", "i.i.d. error law under B"),
    "lrd.alpha": (_float, 0.6, "dependence exponent of the LRD process"),
    "lrd.truncation": (_auto(_int), None, "number of MA coefficients; auto = max(n, 2^14)"),
    "lrd.slowly_varying": (_float, 1.0, "constant slowly varying factor L"),
    "lrd.innovations": (_choice("gaussian", "uniform"), "gaussian", "innovation law"),
    "lrd.mean": (_float, 0.0, "process mean (design mean under B)"),
    "mu.kinks": (_kinks, (), "kinks as theta:jump pairs"),
    "mu.smooth": (_choice("zero", "sine", "poly"), "zero", "smooth part of mu"),
    "mu.smooth_params": (_float_list, (), "sine: amplitude, frequency; poly: coefficients"),
    "mu.smoothness": (_int, 3, "smoothness index of mu"),
    "sigma.kind": (_choice("constant", "sine_bounded"), "constant", "scale function family"),
    "sigma.params": (_float_list, (1.0,), "constant: sigma0; sine_bounded: base, amplitude, frequency"),
    "sigma.smoothness": (_int, 3, "smoothness index of sigma"),
    "estimator.smoothness": (_int, 3, "smoothness s used for kernel and bandwidths"),
    "estimator.kernel_order": (_auto(_int), None, "kernel order; auto = (s - 1) // 2"),
    "estimator.bandwidth_detect": (_auto(_float), None, "detection bandwidth; auto = n^(-5/21)"),
    "estimator.bandwidth_zero": (_auto(_float), None, "zero-crossing bandwidth; auto = n^(-1/(2s+1))"),
    "estimator.f_mode": (_choice("ranks", "oracle"), "ranks", "F-scale positions"),
    "estimator.upsilon_mode": (_choice("plugin", "oracle"), "plugin", "scale of the t-statistic"),
    "estimator.coarse_step": (_float, 0.1, "coarse grid step in units of h_detect"),
    "estimator.fine_exponent": (_auto(_float), None, "fine grid step is h_zero^this; auto = s"),
    "estimator.threshold_inflation": (_float, 1.0, "multiplier of the detection threshold"),
    "estimator.min_fine_step": (_float, 1e-6, "lower bound on the fine grid step"),
    "estimator.detect_oversample": (_int, 4, "detection grid points per partition cell"),
    "estimator.localize_on": (_choice("kappa", "tstat"), "kappa", "profile searched for extrema"),
    "simulate.n": (_int, 1024, "sample size"),
    "simulate.latents": (_bool, False, "also write eps and F(X) columns"),
    "simulate.output": (_choice("dataset", "lrd_series"), "dataset", "what to write"),
    "mc.n_list": (_int_list, (1024, 2048, 4096, 8192, 16384), "sample sizes of a rate study"),
    "mc.n": (_int, 8192, "sample size of null and CLT studies"),
    "mc.reps": (_int, 200, "replications per sample size"),
    "mc.t": (_float, 0.5, "evaluation point of a CLT study"),
    "mc.regime": (_choice("A1", "A2", "B1", "B2"), "A1", "CLT regime"),
    "mc.slope_band": (_float_list, (-0.60, -0.27), "accepted interval for the rate slope"),
    "mc.max_gap": (_float, 0.12, "tolerance on the Gumbel CDF gap"),
    "mc.max_false_alarm": (_float, 0.10, "tolerance on the false-alarm rate"),
    "mc.max_ks": (_float, 0.08, "tolerance on the KS distance"),
}


@dataclass
class RunConfig:
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    @property
    def seed(self):
        return self.values["run.seed"]

    def with_values(self, **updates):
        """Copy with keys replaced; dots in keys are written as ``__``."""
        vals = dict(self.values)
        for k, v in updates.items():
            key = k.replace("__", ".")
            if key not in SCHEMA:
                raise ConfigError(f"unknown key {key!r}", key=key)
            vals[key] = v
        return RunConfig(vals)

    def dumps(self):
        """Canonical text: every key in schema order."""
        return "".join(f"{k} = {_dump(self.values[k])}\n" for k in SCHEMA)

    def digest(self):
        return hashlib.sha256(self.dumps().encode()).hexdigest()[:16]

    # -- builders -----------------------------------------------------------

    def lrd_spec(self):
        v = self.values
        return LinearProcessSpec(v["lrd.alpha"], v["lrd.truncation"], v["lrd.mean"],
                                 v["lrd.slowly_varying"], v["lrd.innovations"])

    def scenario(self):
        v = self.values
        try:
            mu = KinkFunction(v["mu.kinks"], SmoothPart(v["mu.smooth"], v["mu.smooth_params"]),
                              v["mu.smoothness"])
            sigma = ScaleSpec(v["sigma.kind"], v["sigma.params"], v["sigma.smoothness"])
            if v["design.assumption"] == "A":
                design = DesignA(self.lrd_spec(), v["design.law"], v["design.params"])
            else:
                design = DesignB(self.lrd_spec(), v["design.error_law"])
        except KinkScanError as exc:
            raise ConfigError(str(exc)) from exc
        return Scenario(mu, sigma, design)

    def estimator(self):
        fields = {k.split(".", 1)[1]: val for k, val in self.values.items()
                  if k.startswith("estimator.")}
        try:
            return EstimatorConfig(**fields)
        except KinkScanError as exc:
            raise ConfigError(str(exc)) from exc


def defaults():
    return {k: d for k, (_, d, _) in SCHEMA.items()}


def parse_config(text, require=REQUIRED):
    """Parse configuration text into a RunConfig."""
    values = defaults()
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not eq or not key:
            raise ConfigError("expected 'section.key = value'", lineno)
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}", lineno, key)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (first set on line {seen[key]})", lineno, key)
        seen[key] = lineno
        try:
            values[key] = SCHEMA[key][0](val)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", lineno, key) from None
    for key in require:
        if key not in seen:
            raise ConfigError(f"missing required key {key!r}", key=key)
    return RunConfig(values)


def load_config(path, require=REQUIRED):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, require)

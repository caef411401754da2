import difflib
import logging
import math
from typing import Dict, Optional

from werkzeug.datastructures import MultiDict
from wtforms import FloatField, Form, IntegerField, StringField, validators
from wtforms.fields import Field

from sgrd.exceptions import ConfigError, DomainError, ShapeError
from sgrd.models import ExperimentConfig, Params

logger = logging.getLogger(__name__)

KINDS = ('check-params', 'simulate', 'attractor', 'rotation', 'sweep')


class FloatListField(Field):
    """Comma-separated floats, e.g. ``t_ladder = 10, 20, 30``."""

    def __init__(self, label=None, validators=None, separator=',', **kwargs):
        super().__init__(label, validators, **kwargs)
        self.separator = separator

    def _value(self):
        return self.separator.join(repr(x) for x in (self.data or []))

    def process_formdata(self, valuelist):
        if not valuelist:
            return
        text = valuelist[0].strip()
        if not text:
            self.data = []
            return
        try:
            self.data = [float(x) for x in text.split(self.separator) if x.strip()]
        except ValueError:
            self.data = None
            raise ValueError(self.gettext('Not a valid list of numbers.'))


class FloatMatrixField(Field):
    """Rows separated by ``;``, entries by ``,`` (one row per noise shape)."""

    def _value(self):
        return '; '.join(', '.join(repr(x) for x in row) for row in (self.data or []))

    def process_formdata(self, valuelist):
        if not valuelist:
            return
        try:
            self.data = [[float(x) for x in row.split(',') if x.strip()]
                         for row in valuelist[0].split(';') if row.strip()]
        except ValueError:
            self.data = None
            raise ValueError(self.gettext('Not a valid list of coefficient rows.'))


def positive(form, field):
    if field.data is not None and not field.data > 0:
        raise validators.ValidationError('Must be positive.')


def all_positive(form, field):
    if field.data and any(not x > 0 for x in field.data):
        raise validators.ValidationError('Every entry must be positive.')


def delta_value(form, field):
    text = (field.data or 'auto').strip().lower()
    if text == 'auto':
        return
    try:
        value = float(text)
    except ValueError:
        raise validators.ValidationError("Must be 'auto' or a number in (0, 1].")
    if not 0 < value <= 1:
        raise validators.ValidationError(f'delta must lie in (0, 1], got {value}.')


class ExperimentConfigForm(Form):
    kind = StringField('Experiment kind', default='check-params',
                       validators=[validators.Optional(), validators.AnyOf(KINDS)])

    alpha = FloatField('Damping alpha', validators=[validators.InputRequired(), positive])
    kappa = FloatField('Diffusion K', validators=[validators.InputRequired(), positive])
    delta = StringField('Norm parameter delta', default='auto', validators=[delta_value])
    domain_length = FloatField('Domain length L', default=math.pi,
                               validators=[validators.Optional(), positive])
    f_coeffs = FloatListField('Forcing coefficients', default=list)
    f_mean = FloatField('Constant forcing value', default=None, validators=[validators.Optional()])
    h_coeffs = FloatMatrixField('Noise shapes', default=None)
    n_modes = IntegerField('Galerkin modes N', default=32,
                           validators=[validators.Optional(), validators.NumberRange(min=2, max=4096)])
    n_quad = IntegerField('Collocation points M', default=None,
                          validators=[validators.Optional(), validators.NumberRange(min=4)])
    dt = FloatField('Time step', default=1e-3, validators=[validators.Optional(), positive])
    seed = IntegerField('Master seed', default=0,
                        validators=[validators.Optional(), validators.NumberRange(min=0)])

    out_dir = StringField('Output directory', default='runs')
    workers = IntegerField('Workers', default=None,
                           validators=[validators.Optional(), validators.NumberRange(min=1, max=256)])
    burn_in = FloatField('OU burn-in', default=None,
                         validators=[validators.Optional(), validators.NumberRange(min=0)])

    t_end = FloatField('Simulation horizon', default=10.0,
                       validators=[validators.Optional(), validators.NumberRange(min=0)])
    record_every = IntegerField('Record every n steps', default=100,
                                validators=[validators.Optional(), validators.NumberRange(min=1)])
    initial_mean = FloatField('Initial mean of u', default=0.0, validators=[validators.Optional()])
    initial_velocity = FloatField('Initial mean of v', default=0.0, validators=[validators.Optional()])

    t_ladder = FloatListField('Pullback ladder', default=lambda: [10.0, 20.0, 30.0, 40.0, 50.0, 60.0])
    n_p = IntegerField('Curve points', default=128,
                       validators=[validators.Optional(), validators.NumberRange(min=2, max=100000)])
    curve_tol = FloatField('Curve tolerance', default=1e-4, validators=[validators.Optional(), positive])
    n_validation = IntegerField('Validation ICs', default=32,
                                validators=[validators.Optional(), validators.NumberRange(min=1)])

    n_realizations = IntegerField('Realizations', default=4,
                                  validators=[validators.Optional(), validators.NumberRange(min=1)])
    n_ics = IntegerField('Initial conditions', default=8,
                         validators=[validators.Optional(), validators.NumberRange(min=1)])
    rotation_T = FloatField('Rotation horizon', default=200.0, validators=[validators.Optional(), positive])

    sweep_alpha = FloatListField('Sweep alpha values', default=list, validators=[all_positive])
    sweep_kappa = FloatListField('Sweep K values', default=list, validators=[all_positive])

    def validate_t_ladder(self, field):
        if field.data is not None and any(x < 0 for x in field.data):
            raise validators.ValidationError('Pullback horizons must be nonnegative.')

    def validate_sweep_alpha(self, field):
        if self.kind.data == 'sweep' and not (field.data and self.sweep_kappa.data):
            raise validators.ValidationError('A sweep needs nonempty sweep_alpha and sweep_kappa grids.')


def _valid_keys():
    return sorted(ExperimentConfigForm()._fields.keys())


def parse_pairs(text: str) -> MultiDict:
    """Read ``key = value`` lines (``#`` comments, blank lines ignored)."""
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split('=', 1))
        if not key:
            raise ConfigError(f"line {lineno}: missing key")
        pairs.append((key, value))
    return MultiDict(pairs)


def _check_keys(data: MultiDict):
    valid = _valid_keys()
    for key in data.keys():
        if len(data.getlist(key)) > 1:
            raise ConfigError(f"duplicate key '{key}'")
        if key not in valid:
            close = difflib.get_close_matches(key, valid, n=1)
            hint = f"; did you mean '{close[0]}'?" if close else ''
            raise ConfigError(f"unknown key '{key}'{hint}")


def _params_from_form(form: ExperimentConfigForm, seed: int) -> Params:
    delta_text = (form.delta.data or 'auto').strip().lower()
    delta = None if delta_text == 'auto' else float(delta_text)
    length = form.domain_length.data if form.domain_length.data is not None else math.pi
    n_modes = form.n_modes.data if form.n_modes.data is not None else 32

    f = list(form.f_coeffs.data or [])
    if form.f_mean.data is not None:
        if not f:
            f = [0.0]
        f[0] += form.f_mean.data * math.sqrt(length)

    try:
        return Params(
            alpha=form.alpha.data,
            kappa=form.kappa.data,
            delta=delta,
            domain_length=length,
            f_coeffs=f or None,
            h_coeffs=form.h_coeffs.data or None,
            n_modes=n_modes,
            n_quad=form.n_quad.data,
            dt=form.dt.data if form.dt.data is not None else 1e-3,
            seed=seed,
        )
    except (DomainError, ShapeError) as e:
        raise ConfigError(f"invalid parameters: {e}") from e


def load_config(text: str, overrides: Optional[Dict[str, str]] = None) -> ExperimentConfig:
    """Parse and validate a flat experiment configuration.

    ``overrides`` (already strings) replace file values before validation.
    """
    data = parse_pairs(text)
    _check_keys(data)
    for key, value in (overrides or {}).items():
        if value is not None:
            data.setlist(key, [str(value)])

    form = ExperimentConfigForm(formdata=data)
    if not form.validate():
        problems = '; '.join(f"{name}: {', '.join(errs)}" for name, errs in sorted(form.errors.items()))
        raise ConfigError(f"invalid configuration: {problems}")

    seed = form.seed.data if form.seed.data is not None else 0
    params = _params_from_form(form, seed)
    config = ExperimentConfig(
        params=params,
        kind=form.kind.data or 'check-params',
        out_dir=form.out_dir.data or 'runs',
        seed=seed,
        workers=form.workers.data,
        burn_in=form.burn_in.data,
        t_end=form.t_end.data if form.t_end.data is not None else 10.0,
        t_ladder=list(form.t_ladder.data) if form.t_ladder.data is not None else [10.0, 20.0, 30.0, 40.0, 50.0, 60.0],
        n_p=form.n_p.data or 128,
        curve_tol=form.curve_tol.data or 1e-4,
        n_validation=form.n_validation.data or 32,
        n_realizations=form.n_realizations.data or 4,
        n_ics=form.n_ics.data or 8,
        rotation_T=form.rotation_T.data or 200.0,
        record_every=form.record_every.data or 100,
        initial_mean=form.initial_mean.data or 0.0,
        initial_velocity=form.initial_velocity.data or 0.0,
        sweep_alpha=list(form.sweep_alpha.data or []),
        sweep_kappa=list(form.sweep_kappa.data or []),
    )
    logger.debug(f"Loaded {config.kind} configuration (alpha={params.alpha}, kappa={params.kappa})")
    return config

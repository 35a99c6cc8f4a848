# runs/forms.py
"""
Run-config parsing: one django Form per JSON block.

Every error is re-raised as a single ValidationError whose messages are
qualified with the path of the offending value ("grid.spacings[1]: ...").
"""
import json
from dataclasses import dataclass, field

from django import forms
from django.core.exceptions import ValidationError

from geometry.background import BACKGROUND_KINDS, CONSTANT_CURVATURE, FLAT
from geometry.catalog import AMBIENT_VARIATIONS, PARAMETRIZATIONS, PERTURBATIONS, STRIP_HARMONIC_VARIANTS
from dynamics.linearized import OPERATOR_KINDS

TASKS = ['geometry', 'action', 'relax', 'jacobi', 'current', 'sympform', 'convergence']

CONVERGENCE_QUANTITIES = [
    'sphere_mean_curvature',
    'derivative_sin',
    'catenoid_mean_curvature',
    'qec_eom_sphere',
    'great_circle_divergence',
]

# Keys accepted by each perturbation kind besides 'kind' and 'component'
PERTURBATION_KEYS = {
    'constant': {'value'},
    'fourier': {'axis', 'k', 'phase', 'amplitude'},
    'bump': {'center', 'radius', 'amplitude'},
    'sphere_l1': {'m'},
    'strip_harmonic': {'variant'},
    'radial': {'amplitude'},
    'rotation': {'amplitude'},
    'tangential': {'axis', 'profile'},
}

BLOCKS = {'task', 'background', 'grid', 'embedding', 'perturbations', 'output',
          'couplings', 'relax', 'slices', 'convergence', 'jacobi'}
REQUIRED_BLOCKS = ('task', 'background', 'grid', 'embedding')


# =========================================================================
# BLOCK FORMS
# =========================================================================

class BackgroundForm(forms.Form):
    kind = forms.ChoiceField(choices=BACKGROUND_KINDS)
    dim = forms.IntegerField(min_value=2)
    kappa = forms.FloatField(required=False)
    signature = forms.JSONField(required=False)

    def clean_signature(self):
        signature = self.cleaned_data.get('signature')
        if signature in (None, ''):
            return None
        if not isinstance(signature, list) or any(s not in (-1, 1) for s in signature):
            raise ValidationError('entries must be -1 or +1')
        return signature

    def clean(self):
        cleaned = super().clean()
        kind, dim = cleaned.get('kind'), cleaned.get('dim')
        kappa = cleaned.get('kappa') or 0.0
        signature = cleaned.get('signature')
        if kind == FLAT and kappa != 0.0:
            self.add_error('kappa', 'must be 0 for a flat background')
        if kind == CONSTANT_CURVATURE and kappa == 0.0:
            self.add_error('kappa', 'must be non-zero for a constant-curvature background')
        if dim and signature is not None and len(signature) != dim:
            self.add_error('signature', f'needs {dim} entries')
        cleaned['kappa'] = kappa
        return cleaned


def _positive_list(value, name, cast):
    if not isinstance(value, list) or not value:
        raise ValidationError(f'{name} must be a non-empty list')
    out = []
    for index, item in enumerate(value):
        if isinstance(item, bool) or not isinstance(item, (int, float)):
            raise ValidationError(f'{name}[{index}]: must be a number')
        if item <= 0:
            raise ValidationError(f'{name}[{index}]: must be > 0')
        out.append(cast(item))
    return out


class GridForm(forms.Form):
    sizes = forms.JSONField()
    periodic = forms.JSONField(required=False)
    bounds = forms.JSONField(required=False)
    spacings = forms.JSONField(required=False)
    origins = forms.JSONField(required=False)

    def clean_sizes(self):
        sizes = _positive_list(self.cleaned_data['sizes'], 'sizes', int)
        if any(isinstance(s, float) for s in self.cleaned_data['sizes']):
            raise ValidationError('sizes must be integers')
        return sizes

    def clean_spacings(self):
        spacings = self.cleaned_data.get('spacings')
        if spacings in (None, ''):
            return None
        return _positive_list(spacings, 'spacings', float)

    def clean_periodic(self):
        periodic = self.cleaned_data.get('periodic')
        if periodic in (None, ''):
            return None
        if not isinstance(periodic, list) or any(not isinstance(p, bool) for p in periodic):
            raise ValidationError('must be a list of booleans')
        return periodic

    def clean_bounds(self):
        bounds = self.cleaned_data.get('bounds')
        if bounds in (None, ''):
            return None
        if not isinstance(bounds, list):
            raise ValidationError('must be a list of [lo, hi] pairs')
        for index, pair in enumerate(bounds):
            if not (isinstance(pair, list) and len(pair) == 2 and pair[1] > pair[0]):
                raise ValidationError(f'bounds[{index}]: must be [lo, hi] with hi > lo')
        return [[float(lo), float(hi)] for lo, hi in bounds]

    def clean(self):
        cleaned = super().clean()
        sizes = cleaned.get('sizes')
        if not sizes:
            return cleaned
        for name in ('periodic', 'bounds', 'spacings', 'origins'):
            value = cleaned.get(name)
            if value not in (None, '') and len(value) != len(sizes):
                self.add_error(name, f'needs {len(sizes)} entries, one per axis')
        if cleaned.get('spacings') and cleaned.get('bounds'):
            self.add_error('spacings', 'give either bounds or spacings, not both')
        return cleaned


class EmbeddingForm(forms.Form):
    name = forms.ChoiceField(choices=[(n, n) for n in PARAMETRIZATIONS], required=False)
    params = forms.JSONField(required=False)
    csv = forms.CharField(required=False)

    def clean_params(self):
        params = self.cleaned_data.get('params')
        if params in (None, ''):
            return {}
        if not isinstance(params, dict):
            raise ValidationError('must be an object')
        return params

    def clean(self):
        cleaned = super().clean()
        name, csv = cleaned.get('name'), cleaned.get('csv')
        if bool(name) == bool(csv):
            raise ValidationError('give exactly one of name or csv')
        if name:
            allowed = set(PARAMETRIZATIONS[name].defaults) - {'bounds', 'periodic'}
            for key in cleaned.get('params', {}):
                if key not in allowed:
                    self.add_error('params', f"params.{key}: unknown parameter for '{name}'")
        return cleaned


class PerturbationForm(forms.Form):
    kind = forms.ChoiceField(choices=[(k, k) for k in list(PERTURBATIONS) + list(AMBIENT_VARIATIONS)])
    component = forms.IntegerField(min_value=0, required=False)


class OutputForm(forms.Form):
    csv = forms.NullBooleanField(required=False)
    precision = forms.IntegerField(min_value=3, max_value=17, required=False)


class CouplingsForm(forms.Form):
    mu = forms.FloatField(required=False)
    alpha = forms.FloatField(required=False)


class RelaxForm(forms.Form):
    step = forms.FloatField(required=False)
    max_iterations = forms.IntegerField(min_value=1, required=False)
    target = forms.FloatField(required=False)

    def clean_step(self):
        step = self.cleaned_data.get('step')
        if step is not None and step <= 0:
            raise ValidationError('must be > 0')
        return step

    def clean_target(self):
        target = self.cleaned_data.get('target')
        if target is not None and target <= 0:
            raise ValidationError('must be > 0')
        return target


class SlicesForm(forms.Form):
    axis = forms.IntegerField(min_value=0, required=False)
    margin = forms.IntegerField(min_value=1, required=False)


class ConvergenceForm(forms.Form):
    quantity = forms.ChoiceField(choices=[(q, q) for q in CONVERGENCE_QUANTITIES])
    factors = forms.JSONField(required=False)

    def clean_factors(self):
        factors = self.cleaned_data.get('factors')
        if factors in (None, ''):
            return [1, 2, 4]
        factors = _positive_list(factors, 'factors', float)
        if len(factors) < 3:
            raise ValidationError('at least three levels are needed')
        return factors


class JacobiForm(forms.Form):
    operator = forms.ChoiceField(choices=OPERATOR_KINDS, required=False)
    spectrum_head = forms.IntegerField(min_value=1, required=False)


BLOCK_FORMS = {
    'background': BackgroundForm,
    'grid': GridForm,
    'embedding': EmbeddingForm,
    'output': OutputForm,
    'couplings': CouplingsForm,
    'relax': RelaxForm,
    'slices': SlicesForm,
    'convergence': ConvergenceForm,
    'jacobi': JacobiForm,
}


# =========================================================================
# PARSING
# =========================================================================

@dataclass
class RunConfig:
    task: str
    background: dict
    grid: dict
    embedding: dict
    perturbations: list = field(default_factory=list)
    output: dict = field(default_factory=dict)
    couplings: dict = field(default_factory=dict)
    relax: dict = field(default_factory=dict)
    slices: dict = field(default_factory=dict)
    convergence: dict = field(default_factory=dict)
    jacobi: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)


def _form_errors(path, form):
    messages = []
    for name, errors in form.errors.items():
        where = path if name == '__all__' else f'{path}.{name}'
        for error in errors:
            # list-index errors already carry their own field prefix
            if error.startswith(f'{name}[') or error.startswith(f'{name}.'):
                messages.append(f'{path}.{error}')
            else:
                messages.append(f'{where}: {error}')
    return messages


def _validate_block(path, data, form_class):
    if not isinstance(data, dict):
        return None, [f'{path}: must be an object']
    messages = [f'{path}.{key}: unknown key' for key in sorted(set(data) - set(form_class.base_fields))]
    form = form_class(data=data)
    if not form.is_valid():
        messages.extend(_form_errors(path, form))
        return None, messages
    cleaned = {k: v for k, v in form.cleaned_data.items() if v not in (None, '')}
    return cleaned, messages


def _validate_perturbation(path, data):
    if not isinstance(data, dict):
        return None, [f'{path}: must be an object']
    form = PerturbationForm(data=data)
    if not form.is_valid():
        return None, _form_errors(path, form)
    kind = form.cleaned_data['kind']
    extra = set(data) - {'kind', 'component'} - PERTURBATION_KEYS.get(kind, set())
    messages = [f'{path}.{key}: unknown key for perturbation kind {kind!r}' for key in sorted(extra)]
    return dict(data), messages


# =========================================================================
# CROSS-BLOCK CHECKS
# =========================================================================

def _minimum_nodes(periodic):
    return 3 if periodic else 5


def _periodic_flags(grid, embedding):
    sizes = grid['sizes']
    name = embedding.get('name')
    defaults = PARAMETRIZATIONS[name].params(embedding.get('params')) if name else {}
    return grid.get('periodic') or defaults.get('periodic') or [False] * len(sizes)


def _axis_messages(path, value, dim):
    if not isinstance(value, int) or isinstance(value, bool) or not 0 <= value < dim:
        return [f'{path}: must be an axis index below {dim}']
    return []


def _profile_messages(path, spec, dim):
    """Value checks for one named profile on a dim-dimensional worldvolume."""
    kind = spec['kind']
    messages = []
    if kind == 'fourier' and 'axis' in spec:
        messages += _axis_messages(f'{path}.axis', spec['axis'], dim)
    elif kind == 'bump':
        center = spec.get('center')
        if center is not None and (not isinstance(center, list) or len(center) != dim):
            messages.append(f'{path}.center: needs {dim} entries')
        if spec.get('radius', 0.3) <= 0:
            messages.append(f'{path}.radius: must be > 0')
    elif kind in ('sphere_l1', 'strip_harmonic') and dim != 2:
        messages.append(f'{path}.kind: {kind!r} needs a two-dimensional worldvolume')
    if kind == 'sphere_l1' and spec.get('m', 0) not in (-1, 0, 1):
        messages.append(f'{path}.m: must be -1, 0 or 1')
    if kind == 'strip_harmonic' and spec.get('variant', 'cosh_sin') not in STRIP_HARMONIC_VARIANTS:
        messages.append(f"{path}.variant: choose one of {', '.join(STRIP_HARMONIC_VARIANTS)}")
    return messages


def _perturbation_messages(path, spec, dim, codim):
    kind = spec['kind']
    if kind in PERTURBATIONS:
        component = spec.get('component', 0)
        if not isinstance(component, int) or not 0 <= component < codim:
            return [f'{path}.component: must be below the codimension {codim}']
        return _profile_messages(path, spec, dim)
    if kind != 'tangential':
        return []
    messages = _axis_messages(f'{path}.axis', spec.get('axis', 0), dim)
    profile = spec.get('profile', {'kind': 'constant'})
    if not isinstance(profile, dict) or profile.get('kind') not in PERTURBATIONS:
        return messages + [f"{path}.profile.kind: choose one of {', '.join(PERTURBATIONS)}"]
    extra = set(profile) - {'kind'} - PERTURBATION_KEYS[profile['kind']]
    messages += [f'{path}.profile.{key}: unknown key for profile kind {profile["kind"]!r}' for key in sorted(extra)]
    return messages + _profile_messages(f'{path}.profile', profile, dim)


def _shape_messages(blocks, indexed):
    """Grid, embedding, background and perturbations must describe one worldvolume."""
    grid, embedding, background = blocks['grid'], blocks['embedding'], blocks['background']
    sizes = grid['sizes']
    messages = []
    name = embedding.get('name')
    if name:
        param = PARAMETRIZATIONS[name]
        ambient = param.params(embedding.get('params')).get('ambient', param.ambient)
        if len(sizes) != param.dim:
            messages.append(f"grid.sizes: '{name}' needs {param.dim} entries")
        if ambient != background['dim']:
            messages.append(f"background.dim: '{name}' is embedded in {ambient} dimensions")
    if background['dim'] <= len(sizes):
        messages.append('background.dim: must exceed the worldvolume dimension')
    if messages:
        return messages

    for axis, (n, periodic) in enumerate(zip(sizes, _periodic_flags(grid, embedding))):
        need = _minimum_nodes(periodic)
        if n < need:
            where = 'periodic' if periodic else 'non-periodic'
            messages.append(f'grid.sizes[{axis}]: a {where} axis needs at least {need} nodes')

    dim, codim = len(sizes), background['dim'] - len(sizes)
    for index, spec in indexed:
        messages += _perturbation_messages(f'perturbations[{index}]', spec, dim, codim)
    return messages


def check_grid_scale(config, grid_scale):
    """Every grid a run builds (after --grid-scale and ladder factors) must stay valid."""
    factors = config.convergence.get('factors', [1]) if config.task == 'convergence' else [1]
    smallest = min(factors) * grid_scale
    messages = []
    for axis, (n, periodic) in enumerate(zip(config.grid['sizes'], _periodic_flags(config.grid, config.embedding))):
        scaled, need = int(round(n * smallest)), _minimum_nodes(periodic)
        if scaled < need:
            messages.append(f'--grid-scale: axis {axis} drops to {scaled} nodes, at least {need} are needed')
    if messages:
        raise ValidationError(messages)


def parse_config(text):
    """JSON text -> RunConfig; raises one ValidationError listing every problem."""
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f'config is not valid JSON: {exc}') from None
    if not isinstance(document, dict):
        raise ValidationError('config must be a JSON object')

    messages = [f'{key}: unknown key' for key in sorted(set(document) - BLOCKS)]
    messages += [f'{key}: required block is missing' for key in REQUIRED_BLOCKS if key not in document]

    task = document.get('task')
    if 'task' in document and task not in TASKS:
        messages.append(f"task: unknown task {task!r}; choose one of {', '.join(TASKS)}")

    blocks = {}
    for name, form_class in BLOCK_FORMS.items():
        if name not in document:
            continue
        cleaned, problems = _validate_block(name, document[name], form_class)
        messages.extend(problems)
        blocks[name] = cleaned or {}

    perturbations, indexed = [], []
    raw_perturbations = document.get('perturbations', [])
    if not isinstance(raw_perturbations, list):
        messages.append('perturbations: must be a list')
    else:
        for index, item in enumerate(raw_perturbations):
            cleaned, problems = _validate_perturbation(f'perturbations[{index}]', item)
            messages.extend(problems)
            if cleaned is not None:
                perturbations.append(cleaned)
                indexed.append((index, cleaned))

    if task == 'convergence' and 'convergence' not in document:
        messages.append('convergence: required for the convergence task')
    if task in ('current', 'sympform') and len(perturbations) < 2:
        messages.append(f'perturbations: the {task} task needs two perturbations')
    if all(blocks.get(name) for name in ('grid', 'embedding', 'background')):
        messages.extend(_shape_messages(blocks, indexed))

    if messages:
        raise ValidationError(messages)

    return RunConfig(
        task=task,
        perturbations=perturbations,
        raw=document,
        **{name: blocks.get(name, {}) for name in BLOCK_FORMS},
    )

from django import forms
from django.core.exceptions import ValidationError

from .exceptions import ConfigurationError, GeometryError
from .geometry import Strategy, TaggingRule, domain_from_mapping
from .nets import Activation
from .problems import BUILTIN_CASES

MODES = ["verify", "solve", "pinn", "compare", "march", "inverse"]


# -----------------------------
# Custom fields
# -----------------------------
class NumberListField(forms.Field):
    """A YAML list (or comma-separated string) of numbers."""

    def __init__(self, *args, cast=float, length=None, **kwargs):
        self.cast, self.length = cast, length
        super().__init__(*args, **kwargs)

    def to_python(self, value):
        if value in self.empty_values:
            return None
        if isinstance(value, str):
            value = [v for v in value.split(",") if v.strip()]
        if not isinstance(value, (list, tuple)):
            raise ValidationError("expected a list")
        try:
            items = tuple(self.cast(v) for v in value)
        except (TypeError, ValueError):
            raise ValidationError(f"expected numbers, got {value!r}")
        if self.length is not None and len(items) != self.length:
            raise ValidationError(f"expected {self.length} values, got {len(items)}")
        return items


class DomainField(forms.Field):
    def to_python(self, value):
        if value in self.empty_values:
            return None
        if not isinstance(value, dict):
            raise ValidationError("domain must be a mapping with a 'shape' key")
        try:
            return domain_from_mapping(value)
        except (ConfigurationError, GeometryError) as exc:
            raise ValidationError(str(exc))


class TaggingField(forms.Field):
    def to_python(self, value):
        if value in self.empty_values:
            return None
        if not isinstance(value, dict):
            raise ValidationError("tagging must be a mapping of neumann/dirichlet/otherwise")
        try:
            return TaggingRule.from_mapping(value)
        except (ConfigurationError, ValueError) as exc:
            raise ValidationError(str(exc))


class ActivationListField(forms.Field):
    """``all``, one activation name, or a list of names."""

    def to_python(self, value):
        if value in self.empty_values:
            return None
        if value == "all":
            return tuple(a.value for a in Activation)
        names = [value] if isinstance(value, str) else list(value)
        try:
            return tuple(Activation(name).value for name in names)
        except ValueError as exc:
            raise ValidationError(str(exc))


class NetworkListField(forms.Field):
    """Hidden-layer layouts: lists of widths or "LxW" shorthands such as ``2x10``."""

    def to_python(self, value):
        if value in self.empty_values:
            return None
        if not isinstance(value, (list, tuple)):
            raise ValidationError("expected a list of layouts")
        return tuple(self._layout(item) for item in value)

    def _layout(self, item):
        try:
            if isinstance(item, str):
                layers, width = item.lower().split("x")
                widths = (int(width),) * int(layers)
            else:
                widths = tuple(int(w) for w in item)
        except (TypeError, ValueError):
            raise ValidationError(f"bad network layout {item!r}")
        if not widths or min(widths) < 1:
            raise ValidationError(f"network layout {item!r} needs positive widths")
        return widths


class ScaleField(forms.Field):
    def to_python(self, value):
        if value in self.empty_values or value == "auto":
            return "auto" if value == "auto" else None
        try:
            scale = float(value)
        except (TypeError, ValueError):
            raise ValidationError("output_scale must be 'auto' or a positive number")
        if not scale > 0:
            raise ValidationError("output_scale must be positive")
        return scale


# -----------------------------
# Strict section forms
# -----------------------------
class SectionForm(forms.Form):
    """A config section; keys that are not fields are rejected."""

    section = ""

    def __init__(self, data=None, **kwargs):
        data = dict(data or {})
        unknown = sorted(set(data) - set(self.base_fields))
        if unknown:
            raise ConfigurationError(f"unknown key(s) in [{self.section}]: {', '.join(unknown)}")
        self.provided = list(data)
        super().__init__(data, **kwargs)

    def validated(self):
        """Cleaned values of the keys actually provided."""
        if not self.is_valid():
            problems = "; ".join(f"{key}: {' '.join(errors)}" for key, errors in self.errors.items())
            raise ConfigurationError(f"invalid [{self.section}] section: {problems}")
        return {key: self.cleaned_data[key] for key in self.provided if self.cleaned_data.get(key) is not None}


class RunConfigForm(SectionForm):
    section = "run"
    SECTIONS = ("problem", "train", "march", "inverse", "compare")

    case = forms.ChoiceField(choices=[(name, name) for name in BUILTIN_CASES], required=False)
    mode = forms.ChoiceField(choices=[(m, m) for m in MODES], required=False)
    seed = forms.IntegerField(min_value=0, required=False)
    seeds = forms.IntegerField(min_value=1, required=False, help_text="Number of consecutive seeds")
    output_dir = forms.CharField(max_length=500, required=False)
    activations = ActivationListField(required=False)
    gate = forms.BooleanField(required=False)

    def __init__(self, data=None, **kwargs):
        data = {k: v for k, v in dict(data or {}).items() if k not in self.SECTIONS}
        super().__init__(data, **kwargs)


class ProblemOverrideForm(SectionForm):
    section = "problem"

    domain = DomainField(required=False)
    time_interval = NumberListField(length=2, required=False)
    tagging = TaggingField(required=False)

    def clean_time_interval(self):
        interval = self.cleaned_data.get("time_interval")
        if interval and not interval[1] > interval[0]:
            raise ValidationError("time interval end must exceed its start")
        return interval


class TrainConfigForm(SectionForm):
    section = "train"

    iterations = forms.IntegerField(min_value=1, required=False)
    optimizer = forms.ChoiceField(choices=[("adam", "Adam"), ("lbfgs", "L-BFGS")], required=False)
    lr = forms.FloatField(required=False)
    betas = NumberListField(length=2, required=False)
    eps = forms.FloatField(min_value=0, required=False)
    lbfgs_memory = forms.IntegerField(min_value=1, required=False)
    lbfgs_max_evals = forms.IntegerField(min_value=1, required=False)
    refine_iterations = forms.IntegerField(min_value=0, required=False)
    p = forms.IntegerField(min_value=1, max_value=64, required=False)
    hidden = NumberListField(cast=int, required=False)
    activation = forms.ChoiceField(choices=[(a.value, a.value) for a in Activation], required=False)
    n_interior = forms.IntegerField(min_value=1, required=False)
    n_boundary = forms.IntegerField(min_value=1, required=False)
    sampling = forms.ChoiceField(choices=[(s.value, s.value) for s in Strategy], required=False)
    output_scale = ScaleField(required=False)
    warm_start = forms.BooleanField(required=False)
    log_every = forms.IntegerField(min_value=0, required=False)

    def clean_lr(self):
        lr = self.cleaned_data.get("lr")
        if lr is not None and not lr > 0:
            raise ValidationError("learning rate must be positive")
        return lr

    def clean_hidden(self):
        hidden = self.cleaned_data.get("hidden")
        if hidden is not None and (not hidden or min(hidden) < 1):
            raise ValidationError("hidden layers need positive widths")
        return hidden


class MarchConfigForm(SectionForm):
    section = "march"

    steps = forms.IntegerField(min_value=1, required=False)
    checkpoints = forms.BooleanField(required=False)


class InverseConfigForm(SectionForm):
    section = "inverse"

    order = forms.IntegerField(min_value=0, max_value=6, required=False)
    fraction = forms.FloatField(min_value=0, max_value=1, required=False)
    noise = forms.FloatField(min_value=0, max_value=0.2, required=False)
    seed = forms.IntegerField(min_value=0, required=False)
    held_out = forms.IntegerField(min_value=1, required=False)

    def clean_fraction(self):
        fraction = self.cleaned_data.get("fraction")
        if fraction is not None and fraction == 0:
            raise ValidationError("fraction must be greater than zero")
        return fraction


class CompareConfigForm(SectionForm):
    section = "compare"

    samples = forms.IntegerField(min_value=1, required=False, help_text="PINN time samples on (t0, T]")
    networks = NetworkListField(required=False, help_text="Hidden layouts to sweep")
    budgets = NumberListField(cast=int, required=False, help_text="Iteration budgets to sweep")

    def clean_budgets(self):
        budgets = self.cleaned_data.get("budgets")
        if budgets is not None and (not budgets or min(budgets) < 1):
            raise ValidationError("iteration budgets must be positive")
        return budgets

"""
Update plans for data changes: retyping a live global, and storing a field
added to a struct outside the struct's (unchanged) layout.
"""
from dataclasses import dataclass
from typing import Optional

from csubset import ScalarType, FLOAT

WIDENING = 'Widening'
NARROWING = 'Narrowing'
NUMERIC_CLASS_CHANGE = 'NumericClassChange'

INSTANCE_ADDRESS = 'instance-address'


@dataclass(frozen=True)
class TypeChangePlan:
    old_type: ScalarType
    new_type: ScalarType
    direction: str
    needs_value_check: bool
    conversion: Optional[str] = None

    def __post_init__(self):
        if self.direction == WIDENING and self.needs_value_check:
            raise ValueError("a widening never needs a value check")
        if self.direction != WIDENING and not (self.needs_value_check or self.conversion):
            raise ValueError(f"{self.direction} needs a value check or a conversion")

    def to_plain(self):
        return {
            'old_type': self.old_type.name,
            'new_type': self.new_type.name,
            'direction': self.direction,
            'needs_value_check': self.needs_value_check,
            'conversion': self.conversion,
        }


def plan_type_change(old_type: ScalarType, new_type: ScalarType) -> TypeChangePlan:
    """
    Same numeric class and no smaller width: every old value is a new value.
    Anything else is checked against the live value at weave time.
    """
    if old_type.numeric_class != new_type.numeric_class:
        return TypeChangePlan(old_type, new_type, NUMERIC_CLASS_CHANGE, needs_value_check=True)
    if new_type.width >= old_type.width:
        return TypeChangePlan(old_type, new_type, WIDENING, needs_value_check=False)
    return TypeChangePlan(old_type, new_type, NARROWING, needs_value_check=True)


@dataclass(frozen=True)
class ShadowFieldPlan:
    struct_name: str
    field_name: str
    field_type: ScalarType
    default: str
    keying: str = INSTANCE_ADDRESS

    def to_plain(self):
        return {
            'struct': self.struct_name,
            'field': self.field_name,
            'type': self.field_type.name,
            'default': self.default,
            'keying': self.keying,
            'creation': 'lazy',
        }


def default_initializer(field_type: ScalarType) -> str:
    # C static storage semantics: zero of the field's type.
    return '0.0' if field_type.numeric_class == FLOAT else '0'


def plan_shadow_field(struct_name, field_name, field_type: ScalarType) -> ShadowFieldPlan:
    return ShadowFieldPlan(struct_name, field_name, field_type, default_initializer(field_type))

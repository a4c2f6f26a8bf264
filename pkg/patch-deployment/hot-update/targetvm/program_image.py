"""
Loadable program images: struct layouts, global definitions and lowered
functions. The text form is a header line plus canonical JSON, so the same
image always renders to the same bytes.
"""
import json
from dataclasses import dataclass
from typing import Tuple

from utilities import HotmendError, canonical_text

from .instructions import Instruction

IMAGE_HEADER = 'HOTMEND-IMAGE v1'


class ImageFormatError(HotmendError):
    pass


@dataclass(frozen=True)
class LoweredFunction:
    name: str
    params: Tuple[str, ...]
    return_type: str
    registers: int
    code: Tuple[Instruction, ...]

    def to_plain(self):
        return {
            'name': self.name,
            'params': list(self.params),
            'return_type': self.return_type,
            'registers': self.registers,
            'code': [instruction.to_plain() for instruction in self.code],
        }

    @classmethod
    def from_plain(cls, plain):
        return cls(
            name=plain['name'],
            params=tuple(plain['params']),
            return_type=plain['return_type'],
            registers=plain['registers'],
            code=tuple(Instruction.from_plain(i) for i in plain['code']),
        )

    def listing(self):
        lines = [f"{self.name}({', '.join(self.params)}) -> {self.return_type}"]
        lines.extend(f"  {index:4d}  {instruction}" for index, instruction in enumerate(self.code))
        return "\n".join(lines)


@dataclass(frozen=True)
class GlobalSpec:
    name: str
    type_tag: str
    initial: object = None          # number, string, {'function': name} or None for zero

    def to_plain(self):
        return {'name': self.name, 'type': self.type_tag, 'initial': self.initial}

    @classmethod
    def from_plain(cls, plain):
        return cls(plain['name'], plain['type'], plain.get('initial'))


@dataclass(frozen=True)
class StructLayout:
    name: str
    fields: Tuple[Tuple[str, str], ...]

    def field_tag(self, field_name):
        return dict(self.fields).get(field_name)

    def to_plain(self):
        return {'name': self.name, 'fields': [list(f) for f in self.fields]}

    @classmethod
    def from_plain(cls, plain):
        return cls(plain['name'], tuple((f, t) for f, t in plain['fields']))


@dataclass(frozen=True)
class ProgramImage:
    name: str
    structs: Tuple[StructLayout, ...] = ()
    globals: Tuple[GlobalSpec, ...] = ()
    functions: Tuple[LoweredFunction, ...] = ()

    def to_plain(self):
        return {
            'name': self.name,
            'structs': [s.to_plain() for s in self.structs],
            'globals': [g.to_plain() for g in self.globals],
            'functions': [f.to_plain() for f in self.functions],
        }


def render_image(image: ProgramImage) -> str:
    return IMAGE_HEADER + "\n" + canonical_text(image.to_plain())


def load_image(text: str) -> ProgramImage:
    header, _, body = text.partition("\n")
    if header.strip() != IMAGE_HEADER:
        raise ImageFormatError(f"not a program image (header {header.strip()!r})")
    try:
        plain = json.loads(body)
        return ProgramImage(
            name=plain['name'],
            structs=tuple(StructLayout.from_plain(s) for s in plain['structs']),
            globals=tuple(GlobalSpec.from_plain(g) for g in plain['globals']),
            functions=tuple(LoweredFunction.from_plain(f) for f in plain['functions']),
        )
    except (ValueError, KeyError, TypeError) as e:
        raise ImageFormatError(f"malformed program image: {e}") from e

import difflib
import json

import pytest

from csubset import (
    CParseError,
    UnsupportedConstructError,
    ScalarType,
    StructRef,
    SIGNED,
    UNSIGNED,
    FLOAT,
    ALL_SCALAR_TYPES,
    scalar_type,
    parse_translation_unit,
    qualify,
    semantic_diff,
    changed_line_coverage,
    canonical_dump,
    FunctionPointerType,
    function_usage,
    transitive_usage,
    FUNCTION_BODY_CHANGED,
    GLOBAL_TYPE_CHANGED,
    GLOBAL_ADDED,
    FUNCTION_ADDED,
    STRUCT_FIELD_ADDED,
    STRUCT_FIELD_REMOVED,
    STRUCT_FIELD_REORDERED,
)
from diffcore import parse_unified_diff
from .util import parse_fixture, fixture_text

MINIMAL_MAIN = "int32_t\nmain(void)\n{\n\treturn 0;\n}\n"


def parse(source, filename='t.c'):
    return parse_translation_unit(source, filename)


def delta_between(old, new):
    diff_text = ''.join(difflib.unified_diff(old.splitlines(True), new.splitlines(True), 'a/t.c', 'b/t.c'))
    return parse_unified_diff(diff_text).deltas[0]


def test_sshd_unit_shape():
    unit = parse_fixture('sshd', 'old')

    assert [f.name for f in unit.functions] == [
        'input_userauth_info_response',
        'input_userauth_info_response_pam',
        'dispatch_set',
        'serve_request',
        'main',
    ]
    assert unit.struct('authctxt').fields[2] == ('responses', ScalarType(UNSIGNED, 32))
    assert unit.global_var('the_authctxt').var_type == StructRef('authctxt')
    assert unit.function('input_userauth_info_response_pam').address_taken
    assert not unit.function('input_userauth_info_response').address_taken
    assert unit.symbol_names() == sorted(unit.symbol_names())


def test_source_text_covers_whole_definition():
    unit = parse_fixture('limits', 'old')
    text = unit.source_text(unit.function('remaining_quota').span)

    assert text.startswith('int64_t\nremaining_quota(int64_t used)')
    assert text.endswith('return quota - used;\n}')


def test_statics_are_qualified_by_file():
    unit = parse("static int32_t\nhelper(void)\n{\n\treturn 1;\n}\n" + MINIMAL_MAIN, 'src/a.c')

    assert unit.function('a.c!helper') is not None
    assert unit.function('helper') is None
    assert qualify(unit, 'helper') == 'a.c!helper'
    assert qualify(unit, 'main') == 'main'
    assert qualify(unit, 'nothing') is None


def test_host_functions_need_no_declaration():
    unit = parse("void\nf(uint32_t n)\n{\n\ttrace_mark(\"x\");\n\tfatal(\"%u %u\", n, n);\n}\n")
    assert function_usage(unit.function('f')).calls == {'trace_mark', 'fatal'}


def test_cosmetic_edits_produce_no_changes():
    old = parse_fixture('limits', 'old')
    reformatted = fixture_text('limits', 'old', 'limits.c').replace(
        '\topen_connections += 1;', '\t/* one more */\n\topen_connections  +=  1;   // counted')

    assert semantic_diff(old, parse(reformatted, 'limits.c')) == []


def test_sshd_patch_changes_both_handlers():
    changes = semantic_diff(parse_fixture('sshd', 'old'), parse_fixture('sshd', 'new'))

    assert [(c.kind, c.name) for c in changes] == [
        (FUNCTION_BODY_CHANGED, 'input_userauth_info_response'),
        (FUNCTION_BODY_CHANGED, 'input_userauth_info_response_pam'),
    ]


def test_global_retype_is_described_with_types():
    [change] = semantic_diff(parse_fixture('limits', 'old'), parse_fixture('limits', 'widen'))

    assert change.kind == GLOBAL_TYPE_CHANGED
    assert change.describe() == 'GlobalTypeChanged(open_connections: int32 -> int64)'


def test_changes_are_ordered_structs_globals_functions():
    changes = semantic_diff(parse_fixture('session', 'old'), parse_fixture('session', 'new'))

    assert [(c.kind, c.name) for c in changes] == [
        (STRUCT_FIELD_ADDED, 'session.packets'),
        (FUNCTION_BODY_CHANGED, 'account'),
    ]
    assert changes[0].struct_name == 'session'
    assert changes[0].field_name == 'packets'


def test_field_removal_and_reorder():
    old = parse("struct s {\n\tint32_t a;\n\tint32_t b;\n\tint32_t c;\n};\n" + MINIMAL_MAIN)
    removed = parse("struct s {\n\tint32_t a;\n\tint32_t c;\n};\n" + MINIMAL_MAIN)
    reordered = parse("struct s {\n\tint32_t b;\n\tint32_t a;\n\tint32_t c;\n};\n" + MINIMAL_MAIN)

    assert [c.kind for c in semantic_diff(old, removed)] == [STRUCT_FIELD_REMOVED]
    assert [c.kind for c in semantic_diff(old, reordered)] == [STRUCT_FIELD_REORDERED]


def test_additions_come_last():
    old = parse(MINIMAL_MAIN)
    new = parse("uint32_t hits = 0;\n\nvoid\ncount(void)\n{\n\thits += 1;\n}\n" + MINIMAL_MAIN)

    assert [(c.kind, c.name) for c in semantic_diff(old, new)] == [
        (GLOBAL_ADDED, 'hits'),
        (FUNCTION_ADDED, 'count'),
    ]


def test_every_changed_line_is_accounted_for():
    old_text = fixture_text('sshd', 'old', 'sshd.c')
    new_text = fixture_text('sshd', 'new', 'sshd.c')
    old, new = parse(old_text, 'sshd.c'), parse(new_text, 'sshd.c')

    delta = delta_between(old_text, new_text)
    assert changed_line_coverage(delta, old, new, semantic_diff(old, new)) == []


def test_unaccounted_line_is_reported():
    old_text = MINIMAL_MAIN
    new_text = "int32_t helper(int32_t);\n" + MINIMAL_MAIN
    old, new = parse(old_text), parse(new_text)
    changes = semantic_diff(old, new)

    assert changes == []
    assert changed_line_coverage(delta_between(old_text, new_text), old, new, changes) == [('new', 1)]


def test_comment_only_lines_are_covered():
    old_text = MINIMAL_MAIN
    new_text = "/* reviewed */\n" + MINIMAL_MAIN
    old, new = parse(old_text), parse(new_text)

    assert changed_line_coverage(delta_between(old_text, new_text), old, new, []) == []


def test_transitive_usage_follows_direct_calls():
    unit = parse_fixture('sshd', 'old')
    usage = transitive_usage(unit, ['serve_request'])

    assert 'input_userauth_info_response' in usage.calls
    assert 'input_userauth_info_response_pam' in usage.address_refs
    assert 'info_response_handler' in usage.writes
    assert ('authctxt', 'responses') in usage.fields_written


@pytest.mark.parametrize("source, what", [
    ("#include <stdio.h>\n", "preprocessor"),
    ("int32_t f(void)\n{\n\tint32_t i;\n\tfor (i = 0; i < 3; i += 1) {\n\t}\n\treturn 0;\n}\n", "'for'"),
    ("int32_t f(int32_t x)\n{\n\tswitch (x) {\n\t}\n\treturn 0;\n}\n", "'switch'"),
    ("int32_t table[4];\n", "arrays"),
    ("typedef int32_t count_t;\n", "'typedef'"),
    ("struct s {\n\tint32_t a;\n};\nint32_t f(struct s *p)\n{\n\treturn *p;\n}\n", "pointer dereference"),
    ("int32_t f(int32_t x)\n{\n\treturn x ? 1 : 0;\n}\n", "conditional operator"),
    ("int32_t *p;\n", "pointer to scalar"),
    ("union u {\n\tint32_t a;\n};\n", "'union'"),
])
def test_constructs_outside_subset_are_rejected(source, what):
    with pytest.raises(UnsupportedConstructError) as exc:
        parse(source)
    assert what in str(exc.value)
    assert exc.value.line >= 1


def test_parse_errors_carry_position():
    with pytest.raises(CParseError) as exc:
        parse("int32_t\nmain(void)\n{\n\treturn 0\n}\n", 'broken.c')

    assert exc.value.filename == 'broken.c'
    assert exc.value.line == 5
    assert exc.value.column == 1
    assert str(exc.value).startswith('broken.c:5:1:')


def test_void_returning_function_pointers_are_declarators():
    unit = parse("struct ops {\n\tvoid (*done)(int32_t);\n};\n\n"
                 "void\nset(void (*cb)(uint32_t), int32_t n)\n{\n}\n" + MINIMAL_MAIN)

    fn = unit.function('set')
    callback, count = fn.signature.params
    assert isinstance(callback, FunctionPointerType)
    assert callback.signature.return_type is None
    assert callback.signature.params == (scalar_type('uint32'),)
    assert count == scalar_type('int32')
    assert fn.param_names == ('cb', 'n')
    [(field_name, field_type)] = unit.structs[0].fields
    assert field_name == 'done'
    assert isinstance(field_type, FunctionPointerType)


@pytest.mark.parametrize("source, message", [
    ("int32_t\nf(void x)\n{\n\treturn 0;\n}\n", "parameter of type void"),
    ("int32_t\nf(int32_t a, void b)\n{\n\treturn a;\n}\n", "parameter of type void"),
    ("struct s {\n\tvoid v;\n};\n", "field of type void"),
])
def test_plain_void_declarations_are_rejected(source, message):
    with pytest.raises(CParseError) as exc:
        parse(source)
    assert message in str(exc.value)


@pytest.mark.parametrize("source, message", [
    ("int32_t\nf(void)\n{\n\treturn missing;\n}\n", "undeclared identifier 'missing'"),
    ("int32_t\nf(int32_t a)\n{\n\treturn f(a, a);\n}\n", "wrong number of arguments"),
    ("int32_t\nf(void)\n{\n\tbreak;\n}\n", "outside a loop"),
    ("struct s g;\n", "unknown struct 's'"),
    ("int32_t g = 0;\nint32_t g = 1;\n", "redefinition of global 'g'"),
])
def test_name_errors(source, message):
    with pytest.raises(CParseError) as exc:
        parse(source)
    assert message in str(exc.value)


def test_scalar_type_catalogue():
    assert [t.name for t in ALL_SCALAR_TYPES] == [
        'int8', 'int16', 'int32', 'int64', 'uint8', 'uint16', 'uint32', 'uint64', 'float32', 'float64',
    ]
    assert scalar_type('uint32').c_name == 'uint32_t'
    assert scalar_type('float64').c_name == 'double'
    with pytest.raises(ValueError):
        scalar_type('int128')
    with pytest.raises(ValueError):
        ScalarType(FLOAT, 16)


@pytest.mark.parametrize("type_name, value, expected", [
    ('uint32', 0x40000001 * 4, 4),
    ('int8', 200, -56),
    ('uint8', -1, 255),
    ('int32', 2.9, 2),
    ('int32', -2.9, -2),
    ('float32', 0.1, 0.10000000149011612),
])
def test_conversion_on_store(type_name, value, expected):
    assert scalar_type(type_name).convert(value) == expected


def test_representable_values():
    assert ScalarType(SIGNED, 8).represents(-128)
    assert not ScalarType(SIGNED, 8).represents(128)
    assert not ScalarType(UNSIGNED, 16).represents(-1)
    assert ScalarType(FLOAT, 32).represents(1 << 24)
    assert not ScalarType(FLOAT, 32).represents((1 << 24) + 1)
    assert not ScalarType(SIGNED, 32).represents(0.5)


@pytest.mark.parametrize("type_name, value, exact", [
    ('float32', 1 << 30, True),
    ('float32', -(1 << 31), True),
    ('float32', (1 << 30) + 128, True),
    ('float32', (1 << 30) + 1, False),
    ('float32', 1 << 128, False),
    ('float64', 1 << 60, True),
    ('float64', (1 << 53) + 1, False),
    ('float64', 10 ** 400, False),
])
def test_large_integers_in_float_types(type_name, value, exact):
    assert scalar_type(type_name).represents(value) is exact


def test_canonical_dump_is_stable_and_sourceless():
    first = canonical_dump(parse_fixture('session', 'old'))
    second = canonical_dump(parse_fixture('session', 'old'))

    assert first == second
    plain = json.loads(first)
    assert plain['node'] == 'TranslationUnit'
    assert 'source' not in plain
    assert [f['name'] for f in plain['functions']] == ['account', 'main']

import os
import json
import sys

import yaml


class HotmendError(Exception):
    """Base class for every error the pipeline reports to the operator."""


class ConfigError(HotmendError):
    pass


def load_json(filepath):
    """
    Load the data we need, stored in JSON format.
    """
    if not os.path.exists(filepath):
        raise FileNotFoundError(f"File not found: {filepath}")
    with open(filepath, 'r', encoding='utf-8') as f:
        return json.load(f)


def save_json(data, filepath):
    with open(filepath, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=4, sort_keys=True)
        f.write("\n")


def canonical_text(data):
    """
    Canonical structured text: sorted keys, fixed separators, UTF-8 safe.
    Identical inputs always give identical bytes.
    """
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False, separators=(',', ': ')) + "\n"


def load_yaml(filepath):
    if not os.path.exists(filepath):
        raise FileNotFoundError(f"File not found: {filepath}")
    with open(filepath, 'r', encoding='utf-8') as f:
        try:
            return yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"{filepath}: invalid YAML: {e}") from e


def read_text(filepath):
    with open(filepath, 'r', encoding='utf-8', newline='') as f:
        return f.read()


def write_text(text, filepath):
    directory = os.path.dirname(filepath)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(filepath, 'w', encoding='utf-8', newline='') as f:
        f.write(text)


def banner(title, stream=None):
    # Progress output goes to stderr; stdout is reserved for reports.
    stream = stream or sys.stderr
    print("\n" + "=" * 60, file=stream)
    print(title, file=stream)
    print("=" * 60, file=stream)


def check_files_exist(required_files, optional_files=None):
    """
    Return the list of missing required files, reporting optional ones on stderr.
    """
    missing = []
    for file_path in required_files:
        if not os.path.exists(file_path):
            print(f"    ERROR: File not found - {file_path}", file=sys.stderr)
            missing.append(file_path)

    for file_path in optional_files or []:
        if not os.path.exists(file_path):
            print(f"    Optional file not found (this is OK if not needed) - {file_path}", file=sys.stderr)
    return missing

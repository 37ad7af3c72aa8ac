import json

import pytest

from errors import InvalidArgumentError
from run_config import (
    RunConfigManager,
    format_config_text,
    load_config_file,
    parse_config_text,
    split_list,
)

TEXT = """
# cavity run
Out-Dir = results   # trailing comment
meshes=10, 20,40
t_final = 2.5
"""


def test_parse_config_text():
    values = parse_config_text(TEXT)
    assert values == {"out_dir": "results", "meshes": "10, 20,40", "t_final": "2.5"}
    assert split_list(values["meshes"]) == ["10", "20", "40"]
    assert parse_config_text("") == {}


@pytest.mark.parametrize("text, line", [("a = 1\nnot a pair\n", 2), ("# x\n = 3\n", 2)])
def test_parse_errors_name_the_line(text, line):
    with pytest.raises(InvalidArgumentError, match=f"config line {line}"):
        parse_config_text(text)


def test_value_may_contain_equals():
    assert parse_config_text("expr = a=b") == {"expr": "a=b"}


def test_format_round_trip(tmp_path):
    text = format_config_text({"meshes": [10, 20], "bc": None, "nu": 0.01})
    assert text == "meshes = 10,20\nnu = 0.01\n"
    path = tmp_path / "run.cfg"
    path.write_text(text)
    assert load_config_file(str(path)) == {"meshes": "10,20", "nu": "0.01"}


def test_manager_save_load_delete(tmp_path):
    manager = RunConfigManager(str(tmp_path / "configs"))
    assert manager.list_configs() == []
    path = manager.save("re1000", {"nu": 0.001, "meshes": [10, 20]}, command="cavity")
    with open(path, encoding="utf-8") as f:
        stored = json.load(f)
    assert stored == {"name": "re1000", "command": "cavity", "parameters": {"nu": 0.001, "meshes": [10, 20]}}
    manager.save("a-first", {})
    assert manager.list_configs() == ["a-first", "re1000"]
    assert manager.load("re1000") == {"nu": 0.001, "meshes": [10, 20]}
    assert manager.delete("re1000")
    assert not manager.delete("re1000")
    with pytest.raises(InvalidArgumentError):
        manager.load("re1000")


@pytest.mark.parametrize("name", ["", "../escape", "two words"])
def test_invalid_names(tmp_path, name):
    manager = RunConfigManager(str(tmp_path))
    with pytest.raises(InvalidArgumentError):
        manager.load(name)

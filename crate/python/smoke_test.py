"""Smoke test for the deepsearch Python extension.

Build and install first:  pip install --no-build-isolation -e crates/py
"""

import json
import pathlib

import deepsearch

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "crates" / "core" / "fixtures"


def check_graph():
    g = deepsearch.ThoughtGraph("Who designed the lamp?")
    g.add_node("designer", "Who designed the lamp?")
    assert g.add_edge("root", "designer")
    assert not g.add_edge("root", "designer")
    assert g.ready_nodes() == ["designer"]
    g.mark_running("designer")
    g.record_answer("designer", "Mira Kalden")
    assert g.state("designer") == "done"
    try:
        g.add_edge("designer", "root")
    except ValueError:
        pass
    else:
        raise AssertionError("cycle accepted")
    assert len(g) == 2
    assert g.snapshot().splitlines()[0].startswith("node root start done 0 ")


def check_actions():
    code = deepsearch.extract_code("Plan:\n```python\ngraph.add_node('a', 'A?')\ngraph.add_edge('root', 'a')\n```")
    actions, diags = deepsearch.parse(code)
    assert actions == [("add_node", "a", "A?"), ("add_edge", "root", "a")], actions
    assert diags == []
    actions, diags = deepsearch.parse("import os")
    assert actions == [] and "BadReceiver" in diags[0]
    g = deepsearch.ThoughtGraph("Q?")
    assert g.apply_code(code) == []
    assert g.edges() == [("root", "a")]


def check_scoring():
    assert deepsearch.exact_match("The Eiffel Tower.", ["eiffel tower"])
    assert not deepsearch.exact_match("Paris, France", ["Paris"])
    assert deepsearch.normalize_url("HTTPS://Ex.com:443/a/#x") == "https://ex.com/a"


def check_session():
    result = deepsearch.run_session(str(FIXTURES / "fixture.toml"), (FIXTURES / "lamp" / "question.txt").read_text().strip())
    assert result.status == "done"
    assert "Tarrow" in result.answer and "1894" in result.answer
    assert result.snapshot == (FIXTURES / "lamp" / "golden_snapshot.txt").read_text()
    kinds = [json.loads(e)["kind"] for e in result.events]
    assert kinds[0] == "session_started" and kinds[-1] == "session_done"
    assert result.citations


if __name__ == "__main__":
    check_graph()
    check_actions()
    check_scoring()
    check_session()
    print("python smoke test: ok")

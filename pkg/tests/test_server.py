import shutil

import pytest
from fastapi.testclient import TestClient

from pinwalk.compiler import PruneConfig, compile_files
from pinwalk.errors import ConfigError, EmptyQueryError, PinwalkError
from pinwalk.server import (
    RecommendRequestModel,
    RecommendService,
    ServerConfig,
    UserAction,
    build_query_from_actions,
    create_app,
    decayed_weight,
)
from pinwalk.synth import SynthConfig, generate
from pinwalk.walk import WalkConfig


# -- decay math ---------------------------------------------------------------

def test_decay_at_zero_age():
    assert decayed_weight(2.0, 0.0, 100.0) == 2.0


def test_decay_one_half_life():
    assert decayed_weight(2.0, 100.0, 100.0) == pytest.approx(1.0)


def test_decay_two_half_lives():
    assert decayed_weight(2.0, 200.0, 100.0) == pytest.approx(0.5)


def test_decay_rejects_bad_half_life():
    with pytest.raises(ConfigError):
        decayed_weight(1.0, 0.0, 0.0)


# -- action folding -------------------------------------------------------------

def _resolver(known: dict[str, int]):
    return lambda key: known.get(key)


def test_single_save_action_normalizes_to_one():
    weights, dropped = build_query_from_actions(
        [UserAction("p1", "save", 0.0)], {"save": 1.0}, 100.0,
        _resolver({"p1": 7}))
    assert weights == {7: 1.0}
    assert dropped == []


def test_repeat_saves_accumulate_decayed():
    actions = [UserAction("p1", "save", 0.0), UserAction("p1", "save", 100.0)]
    # pre-normalization mass is 1.0 + 0.5 = 1.5 * w0; with one pin the
    # normalized weight is 1, so check the ratio against a second pin
    actions.append(UserAction("p2", "save", 0.0))
    weights, _ = build_query_from_actions(actions, {"save": 2.0}, 100.0,
                                          _resolver({"p1": 1, "p2": 2}))
    assert weights[1] / weights[2] == pytest.approx(1.5)
    assert sum(weights.values()) == pytest.approx(1.0)


def test_two_equal_actions_split_evenly():
    weights, _ = build_query_from_actions(
        [UserAction("a", "like", 50.0), UserAction("b", "like", 50.0)],
        {"like": 0.5}, 100.0, _resolver({"a": 1, "b": 2}))
    assert weights == {1: 0.5, 2: 0.5}


def test_unknown_pins_dropped_and_reported():
    weights, dropped = build_query_from_actions(
        [UserAction("gone", "save", 0.0), UserAction("here", "save", 0.0)],
        {"save": 1.0}, 100.0, _resolver({"here": 3}))
    assert dropped == ["gone"]
    assert list(weights) == [3]


def test_all_unknown_raises_empty_query():
    with pytest.raises(EmptyQueryError):
        build_query_from_actions([UserAction("gone", "save", 0.0)],
                                 {"save": 1.0}, 100.0, _resolver({}))


def test_unknown_action_type_rejected():
    with pytest.raises(ConfigError):
        build_query_from_actions([UserAction("p", "poke", 0.0)],
                                 {"save": 1.0}, 100.0, _resolver({"p": 1}))


# -- service over HTTP -------------------------------------------------------------

@pytest.fixture(scope="module")
def graph_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("graphs")
    data = generate(SynthConfig(communities=3, pins_per_community=60,
                                boards_per_community=12, edges_per_board=15,
                                cross_community_noise=0.05, seed=31))
    edges, topics = tmp / "edges.tsv", tmp / "topics.tsv"
    data.write_raw_files(edges, topics)
    compile_files(edges, topics, PruneConfig(entropy_quantile=0.0, delta=1.0),
                  tmp / "graph-000.pixg")
    return tmp


@pytest.fixture(scope="module")
def client(graph_dir):
    service = RecommendService(ServerConfig(
        graph_dir=str(graph_dir), seed=99,
        walk=WalkConfig(total_steps=5_000, top_k=100)))
    app = create_app(service)
    with TestClient(app) as c:
        yield c


def test_health_reports_graph(client):
    body = client.get("/v1/health").json()
    assert body["status"] == "ok"
    assert body["graphVersion"] == "graph-000.pixg"
    assert body["nodes"] > 0
    assert body["edges"] > 0


def test_pinned_seed_is_reproducible(client):
    req = {"query": [{"pinKey": "p3", "weight": 1.0}], "seed": 1234,
           "topK": 20}
    r1 = client.post("/v1/recommend", json=req)
    r2 = client.post("/v1/recommend", json=req)
    assert r1.status_code == 200
    assert r1.content == r2.content
    assert "X-Latency-Micros" in r1.headers


def test_unpinned_seed_varies(client):
    req = {"query": [{"pinKey": "p3"}], "topK": 20}
    r1 = client.post("/v1/recommend", json=req).json()
    r2 = client.post("/v1/recommend", json=req).json()
    assert r1["results"] != r2["results"]


def test_partial_unknown_pin_warns(client):
    req = {"query": [{"pinKey": "p3"}, {"pinKey": "nope"}], "seed": 5}
    r = client.post("/v1/recommend", json=req)
    assert r.status_code == 200
    body = r.json()
    assert any("nope" in w for w in body["warnings"])
    assert body["results"]


def test_all_unknown_pins_is_400(client):
    r = client.post("/v1/recommend",
                    json={"query": [{"pinKey": "nope"}], "seed": 5})
    assert r.status_code == 400


def test_top_k_bounds_results(client):
    r = client.post("/v1/recommend",
                    json={"query": [{"pinKey": "p3"}], "seed": 5, "topK": 5})
    assert len(r.json()["results"]) <= 5


def test_results_sorted_by_score_then_key(client):
    r = client.post("/v1/recommend",
                    json={"query": [{"pinKey": "p3"}], "seed": 7, "topK": 50})
    results = r.json()["results"]
    for a, b in zip(results, results[1:]):
        assert a["score"] > b["score"] or (
            a["score"] == b["score"] and a["pinKey"] < b["pinKey"])


def test_overrides_out_of_range_rejected(client):
    r = client.post("/v1/recommend",
                    json={"query": [{"pinKey": "p3"}],
                          "overrides": {"alpha": 3.0}})
    assert r.status_code == 400


def test_overrides_change_behavior(client):
    base = {"query": [{"pinKey": "p3"}], "seed": 11, "topK": 1000}
    small = dict(base, overrides={"totalSteps": 500})
    big = dict(base, overrides={"totalSteps": 5000})
    s = client.post("/v1/recommend", json=small).json()
    b = client.post("/v1/recommend", json=big).json()
    assert s["stats"]["stepsUsed"] < b["stats"]["stepsUsed"]


def test_actions_build_query(client):
    req = {"actions": [{"pinKey": "p3", "actionType": "save",
                        "ageSeconds": 0.0},
                       {"pinKey": "p4", "actionType": "click",
                        "ageSeconds": 10.0}],
           "seed": 13, "topK": 20}
    r = client.post("/v1/recommend", json=req)
    assert r.status_code == 200
    assert r.json()["results"]


def test_user_features_accepted(client):
    req = {"query": [{"pinKey": "p3"}], "userFeatures": [1, "2"],
           "overrides": {"biasStrength": 0.8}, "seed": 17, "topK": 20}
    r = client.post("/v1/recommend", json=req)
    assert r.status_code == 200


def test_bad_user_features_rejected(client):
    req = {"query": [{"pinKey": "p3"}], "userFeatures": ["english"]}
    r = client.post("/v1/recommend", json=req)
    assert r.status_code == 400


def test_query_pin_not_echoed_back(client):
    r = client.post("/v1/recommend",
                    json={"query": [{"pinKey": "p3"}], "seed": 5})
    assert all(x["pinKey"] != "p3" for x in r.json()["results"])


# -- hot swap ------------------------------------------------------------------------

def test_hot_swap_ignores_corrupt_then_takes_valid(tmp_path):
    data = generate(SynthConfig(communities=2, pins_per_community=40,
                                boards_per_community=10, edges_per_board=10,
                                seed=41))
    edges, topics = tmp_path / "e.tsv", tmp_path / "t.tsv"
    data.write_raw_files(edges, topics)
    compile_files(edges, topics, PruneConfig(), tmp_path / "graph-000.pixg")

    service = RecommendService(ServerConfig(
        graph_dir=str(tmp_path), walk=WalkConfig(total_steps=1000)))
    assert service.bundle.version == "graph-000.pixg"

    # corrupt newer file: no swap, old graph keeps serving
    (tmp_path / "graph-001.pixg").write_bytes(b"garbage")
    (tmp_path / "graph-001.idmap").write_text("")
    assert not service.check_for_new_graph()
    assert service.bundle.version == "graph-000.pixg"
    out = service.recommend(RecommendRequestModel(
        query=[{"pinKey": "p1"}], seed=3))
    assert out.graph_version == "graph-000.pixg"

    # valid newer file: swap
    compile_files(edges, topics, PruneConfig(delta=0.5),
                  tmp_path / "graph-002.pixg")
    assert service.check_for_new_graph()
    assert service.bundle.version == "graph-002.pixg"


def test_graph_without_idmap_not_eligible(tmp_path, graph_dir):
    shutil.copy(graph_dir / "graph-000.pixg", tmp_path / "graph-000.pixg")
    with pytest.raises(PinwalkError):
        RecommendService(ServerConfig(graph_dir=str(tmp_path)))


def test_missing_graph_dir_raises(tmp_path):
    with pytest.raises(PinwalkError):
        RecommendService(ServerConfig(graph_dir=str(tmp_path / "empty")))

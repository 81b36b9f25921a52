import numpy as np
import pytest

from pinwalk.compiler import parse_edge_file, parse_topics_file
from pinwalk.errors import ConfigError
from pinwalk.synth import SynthConfig, bilingual_config, generate


def _cfg(**kw) -> SynthConfig:
    base = dict(communities=3, pins_per_community=30, boards_per_community=8,
                edges_per_board=10, seed=4)
    base.update(kw)
    return SynthConfig(**base)


def test_zero_noise_means_no_cross_community_edges():
    data = generate(_cfg(cross_community_noise=0.0))
    g = data.graph
    for b, members in enumerate(data.board_members):
        c = data.community_of_board(b)
        assert all(data.community_of_pin(p) == c for p in members)
    assert g.validate().ok


def test_fixed_seed_reproduces_graph():
    a = generate(_cfg(cross_community_noise=0.1))
    b = generate(_cfg(cross_community_noise=0.1))
    assert a.graph.equals(b.graph)
    assert np.array_equal(a.pin_vectors, b.pin_vectors)
    assert a.board_members == b.board_members


def test_raw_edge_count_matches_construction():
    cfg = _cfg()
    data = generate(cfg)
    assert data.raw_edge_count == (cfg.communities * cfg.boards_per_community
                                   * cfg.edges_per_board)
    # dedup can only shrink
    assert data.graph.edge_slots // 2 <= data.raw_edge_count


def test_attributes_follow_communities():
    data = generate(_cfg())
    g = data.graph
    for c in range(3):
        pin = c * 30 + 5
        assert int(g.node_attr[pin]) == c + 1
        board = g.pin_count + c * 8 + 2
        assert int(g.node_attr[board]) == c + 1


def test_topic_vectors_are_distributions_with_dominant_community():
    data = generate(_cfg())
    sums = data.pin_vectors.sum(axis=1)
    assert np.allclose(sums, 1.0, atol=1e-9)
    for p in range(data.cfg.pin_count):
        assert data.pin_vectors[p].argmax() == data.community_of_pin(p)


def test_written_files_parse_back(tmp_path):
    data = generate(_cfg(cross_community_noise=0.05))
    edges_path = tmp_path / "edges.tsv"
    topics_path = tmp_path / "topics.tsv"
    data.write_raw_files(edges_path, topics_path)
    parsed = parse_edge_file(edges_path)
    assert len(parsed.edges) == data.graph.edge_slots // 2
    topics = parse_topics_file(topics_path)
    assert len(topics) == data.cfg.pin_count + data.cfg.board_count


def test_bilingual_config_has_two_populations():
    data = generate(bilingual_config(pins_per_community=50,
                                     boards_per_community=10,
                                     edges_per_board=10))
    attrs = set(int(a) for a in data.graph.node_attr)
    assert attrs == {1, 2}
    # cross links exist at this noise level
    cross = sum(1 for b, members in enumerate(data.board_members)
                for p in members
                if data.community_of_pin(p) != data.community_of_board(b))
    assert cross > 0


def test_config_validation():
    with pytest.raises(ConfigError):
        _cfg(communities=0).validated()
    with pytest.raises(ConfigError):
        _cfg(cross_community_noise=1.0).validated()

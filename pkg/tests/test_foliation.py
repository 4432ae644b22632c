from types import SimpleNamespace

import numpy as np
import pytest

from affinelab.cli import main
from affinelab.config import FoliationSettings
from affinelab.congruence import developability_residual
from affinelab.errors import UmbilicSeed
from affinelab.foliation import (TERMINATIONS, DirectionField, Polyline, Portrait, build_portrait, dump,
                                 _split_periodic, index_label, integrate_line, loop_rotation, render)
from affinelab.geometry import decompose


@pytest.fixture
def cubic_field(cubic_graph):
    return DirectionField(cubic_graph)


def test_seed_at_umbilic(sphere):
    with pytest.raises(UmbilicSeed):
        integrate_line(DirectionField(sphere), (0.1, 0.2))


def test_family_must_be_one_or_two(cubic_field):
    with pytest.raises(ValueError):
        integrate_line(cubic_field, (0.2, 0.1), family=3)


def test_line_follows_its_family(cubic_field):
    line = integrate_line(cubic_field, (0.2, 0.15), 1, umbilics=[(0.0, 0.0)])
    assert set(line.ends) <= set(TERMINATIONS)
    assert len(line.points) > 2
    assert line.length > 0
    far = [(p, t) for p, t in zip(line.points[1:-1], line.tangents[1:-1]) if np.hypot(*p) > 0.1]
    assert far
    for p, t in far:
        d = cubic_field.directions(p[0], p[1])[0]
        assert abs(float(d @ t)) > 0.9


def test_loop_rotation_about_umbilic(cubic_field):
    assert loop_rotation(cubic_field, (0.0, 0.0), 0.2) == -0.5


def test_loop_rotation_about_ordinary_point(cubic_field):
    assert loop_rotation(cubic_field, (0.25, 0.1), 0.05) == 0.0


def test_loop_rotation_on_ellipsoid(ellipsoid_charts):
    field = DirectionField(ellipsoid_charts[0])
    assert loop_rotation(field, (0.0, 0.9117382909029281), 0.1) == 0.5


def test_portrait_accounts_for_every_seed(cubic_graph):
    settings = FoliationSettings(seeds=3, max_steps=60)
    portrait = build_portrait(cubic_graph, settings, [((0.0, 0.0), -0.5)])
    # the centre seed sits on the umbilic and is skipped
    assert len(portrait.lines) + portrait.aborted == 16
    assert portrait.family(1) and portrait.family(2)
    assert portrait.umbilics == [((0.0, 0.0), -0.5)]


def test_dump(cubic_graph, tmp_path):
    path = tmp_path / "cubic.csv"
    text = dump(cubic_graph, 50, path)
    lines = text.splitlines()
    assert lines[0] == "u,v,B1,B2"
    assert len(lines) == 2501
    assert path.read_text() == text


def _sample_portrait():
    line = Polyline(1, np.array([[0.0, 0.0], [0.5, 0.5]]), np.array([[1.0, 1.0], [1.0, 1.0]]),
                    ("boundary", "boundary"))
    other = Polyline(2, np.array([[0.0, 0.5], [0.5, 0.0]]), np.array([[1.0, -1.0], [1.0, -1.0]]),
                     ("boundary", "boundary"))
    return Portrait("sample", (-1.0, 1.0), (-1.0, 1.0), lines=[line, other], umbilics=[((0.1, 0.2), 0.5)])


def test_render_is_deterministic(tmp_path):
    first = render(_sample_portrait())
    second = render(_sample_portrait(), tmp_path / "sample.svg")
    assert first == second
    assert (tmp_path / "sample.svg").read_text() == first
    for gid in ("family-1", "family-2", "umbilic-0"):
        assert f'id="{gid}"' in first


def test_render_empty_portrait():
    svg = render(Portrait("", (0.0, 1.0), (0.0, 1.0)))
    assert svg.lstrip().startswith("<?xml")
    assert 'id="umbilic-0"' not in svg


def test_periodic_lines_are_split():
    wrapped = Polyline(1, np.array([[3.0, 0.0], [3.1, 0.0], [-3.1, 0.0], [-3.0, 0.0]]),
                       np.zeros((4, 2)), ("closed", "closed"))
    portrait = Portrait("ring", (-np.pi, np.pi), (-1.0, 1.0), (True, False), lines=[wrapped])
    pieces = _split_periodic(wrapped.points, portrait)
    assert [len(piece) for piece in pieces] == [2, 2]
    assert "<svg" in render(portrait)


@pytest.mark.parametrize("index, label", [(0.5, "+1/2"), (-0.5, "-1/2"), (-1.0, "-1"), (1.0, "+1"), (None, "?")])
def test_index_label(index, label):
    assert index_label(index) == label


def test_integrated_lines_are_developable_and_h_orthogonal(ellipsoid_charts):
    scene = ellipsoid_charts[0]
    field = DirectionField(scene)
    settings = FoliationSettings(step=0.01, max_steps=40)
    for family in (1, 2):
        line = integrate_line(field, (0.6, 0.2), family, settings)
        chords = np.diff(line.points, axis=0)
        mids = 0.5 * (line.points[1:] + line.points[:-1])
        keep = np.hypot(chords[:, 0], chords[:, 1]) > 1e-9
        chords, mids = chords[keep], mids[keep]
        assert len(mids) > 10

        along = SimpleNamespace(points=mids, tangents=chords)
        assert developability_residual(scene, along).relative < 1e-3

        h = decompose(scene, (mids[:, 0], mids[:, 1])).h
        t = chords.T
        other = field.directions(mids[:, 0], mids[:, 1])[2 - family]
        cross = np.einsum("in,ijn,jn->n", t, h, other)
        norms = np.sqrt(np.einsum("in,ijn,jn->n", t, h, t) * np.einsum("in,ijn,jn->n", other, h, other))
        assert np.all(np.abs(cross) < 1e-3 * norms)


def test_portrait_files_are_reproducible(scenes_dir, tmp_path):
    scene = str(scenes_dir / "cubic_deviator.json")
    outputs = []
    for run in ("first", "second"):
        out = tmp_path / run
        argv = ["foliate", scene, "--svg", "--csv", "--out", str(out),
                "--set", "foliation.seeds=3", "--set", "foliation.max_steps=60"]
        assert main(argv) == 0
        outputs.append(((out / "cubic_deviator.svg").read_bytes(), (out / "cubic_deviator.csv").read_bytes()))
    assert outputs[0] == outputs[1]
    svg, csv = outputs[0]
    assert b'id="family-1"' in svg and b'id="umbilic-0"' in svg
    assert csv.startswith(b"u,v,B1,B2\n")

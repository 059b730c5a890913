import numpy as np
import pytest

from tomoprior.core import BoundsError, ConfigError, RoI
from tomoprior.phantoms import (MAX_VALUE, PRESETS, AddDisk, AddNeedle, PhantomScenario,
                                RestoreDisk, base_phantom, defect_scenario, disk_pack,
                                generate_longitudinal, needle_scenario, okra_scenario,
                                perturbed_scenario, shepp_logan, split_templates)
from tomoprior.prior import build_eigenspace, project_onto


def test_shepp_logan_range_and_symmetry():
    x = shepp_logan(64)
    assert x.shape == (64, 64)
    assert 0.0 <= x.min() and x.max() <= 1.0
    np.testing.assert_allclose(x.max(), 1.0)


def test_disk_pack_is_seeded():
    assert np.array_equal(disk_pack(48, seed=3), disk_pack(48, seed=3))
    assert not np.array_equal(disk_pack(48, seed=3), disk_pack(48, seed=4))


def test_empty_evolution_is_base_only():
    scen = PhantomScenario(size=32)
    scans = generate_longitudinal(scen)
    assert len(scans) == 1
    np.testing.assert_array_equal(scans[0], base_phantom(scen))


def test_add_disk_changes_exactly_its_footprint():
    scen = PhantomScenario(size=48, evolution=(AddDisk(20, 24, 5, 0.0),))
    s0, s1 = generate_longitudinal(scen)
    yy, xx = np.mgrid[0:48, 0:48]
    disk = (xx - 20) ** 2 + (yy - 24) ** 2 <= 25
    assert np.all(s1[disk] == 0.0)
    np.testing.assert_array_equal(s1[~disk], s0[~disk])
    changed = s1 != s0
    assert np.all(disk[changed])


def test_restore_reverts_to_base():
    scen = PhantomScenario(size=32, evolution=(AddDisk(16, 16, 4, 0.9), RestoreDisk(16, 16, 4)))
    s0, _, s2 = generate_longitudinal(scen)
    np.testing.assert_array_equal(s2, s0)


def test_values_clamped():
    scen = PhantomScenario(size=32, evolution=(AddDisk(10, 10, 3, 5.0), AddDisk(20, 20, 3, -1.0)))
    for s in generate_longitudinal(scen):
        assert s.min() >= 0.0 and s.max() <= MAX_VALUE
    assert generate_longitudinal(scen)[1].max() == MAX_VALUE


@pytest.mark.parametrize("edit", [AddDisk(40, 5, 2, 1.0), AddDisk(-1, 5, 2, 1.0),
                                  AddNeedle(1, 1, 1, 33)])
def test_out_of_bounds_edit(edit):
    with pytest.raises(BoundsError):
        generate_longitudinal(PhantomScenario(size=32, evolution=(edit,)))


def test_bounds_error_is_a_configuration_error():
    assert issubclass(BoundsError, ConfigError)


def test_scenario_validation():
    with pytest.raises(ConfigError):
        PhantomScenario(base="potato")
    with pytest.raises(ConfigError):
        PhantomScenario(size=2)
    with pytest.raises((ConfigError, BoundsError)):
        PhantomScenario(size=16, roi=RoI(0, 0, 20, 4))
    with pytest.raises(ConfigError):
        generate_longitudinal(PhantomScenario(size=16, evolution=(AddDisk(5, 5, 0, 1.0),)))


def test_needle_is_bright_and_moves():
    scen = needle_scenario(64)
    scans = generate_longitudinal(scen)
    assert len(scans) == 8
    assert scans[1].max() == MAX_VALUE
    # the needle grows over the advancing scans
    bright = [int((s == MAX_VALUE).sum()) for s in scans[1:-1]]
    assert all(b > a for a, b in zip(bright, bright[1:]))
    mask = scen.roi.mask(64, 64)
    assert np.any((scans[-1] != scans[-2]) & mask)


def test_okra_test_differs_from_every_template():
    scen = okra_scenario(64)
    templates, test = split_templates(scen, generate_longitudinal(scen))
    assert len(templates) == 4
    for t in templates:
        assert np.any(t != test)


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_are_deterministic(name):
    a = generate_longitudinal(PRESETS[name](48))
    b = generate_longitudinal(PRESETS[name](48))
    assert len(a) == len(b)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


@pytest.mark.parametrize("make", [lambda: defect_scenario(64), lambda: needle_scenario(64)])
def test_new_structure_lies_outside_template_span(make):
    scen = make()
    templates, test = split_templates(scen, generate_longitudinal(scen))
    _, proj = project_onto(build_eigenspace(templates), test)
    assert np.max(np.abs(test - proj)) >= 0.1


def test_held_out_test_lies_inside_span():
    scen = defect_scenario(64, held_out=True)
    templates, test = split_templates(scen, generate_longitudinal(scen))
    _, proj = project_onto(build_eigenspace(templates), test)
    assert np.max(np.abs(test - proj)) <= 1e-10


def test_perturbed_templates_selection():
    scen = perturbed_scenario(32, 4, seed=1)
    scans = generate_longitudinal(scen)
    templates, test = split_templates(scen, scans)
    assert len(scans) == 6 and len(templates) == 4
    assert test is scans[-1]

from __future__ import annotations

import numpy as np
import pytest

from sceneprune.scene import (
    Appearance,
    SceneElement,
    SceneSpec,
    SemanticLevel,
    composite_scene,
    level_from_name,
    rect_mask,
    remove_element_oracle,
    render,
    scene_from_doc,
    scene_from_json,
    scene_to_json,
    visible_footprint,
)

from conftest import make_element


class TestSemanticLevel:
    def test_total_order_matches_removal_priority(self):
        assert (
            SemanticLevel.DISTRACTOR
            < SemanticLevel.SECONDARY
            < SemanticLevel.PRIMARY
            < SemanticLevel.BACKGROUND
        )

    def test_exactly_four_values(self):
        assert [lvl.value for lvl in SemanticLevel] == [0, 1, 2, 3]

    def test_parse_known_names_case_insensitive(self):
        assert level_from_name("Distractor") is SemanticLevel.DISTRACTOR
        assert level_from_name(" background ") is SemanticLevel.BACKGROUND

    def test_parse_unknown_name_errors(self):
        with pytest.raises(ValueError):
            level_from_name("foreground")


class TestCompositing:
    def test_empty_scene_is_background_fill(self):
        spec = SceneSpec(width=20, height=10, background=Appearance(color=(0.2, 0.4, 0.6)))
        img = composite_scene(spec)
        assert img.shape == (10, 20, 3)
        assert np.all(img == np.array([0.2, 0.4, 0.6]))

    def test_red_square_pixel_count(self):
        square = make_element("sq", SemanticLevel.PRIMARY, (30, 30, 10, 10), (1.0, 0.0, 0.0))
        spec = SceneSpec(width=64, height=64, background=Appearance(color=(1.0, 1.0, 1.0)), elements=[square])
        img = composite_scene(spec)
        red = np.all(img == (1.0, 0.0, 0.0), axis=-1)
        assert int(red.sum()) == 100
        assert np.array_equal(red, square.mask)

    def test_higher_z_occludes_lower(self, overlapping_scene):
        img = composite_scene(overlapping_scene)
        over = overlapping_scene.element("over")
        assert np.all(img[over.mask] == over.appearance.color)

    def test_equal_z_resolved_by_list_position(self):
        a = make_element("a", SemanticLevel.PRIMARY, (10, 10, 8, 8), (1.0, 0.0, 0.0), z=5, height=32, width=32)
        b = make_element("b", SemanticLevel.PRIMARY, (12, 12, 8, 8), (0.0, 1.0, 0.0), z=5, height=32, width=32)
        img = composite_scene(SceneSpec(width=32, height=32, elements=[a, b]))
        assert tuple(img[14, 14]) == (0.0, 1.0, 0.0)

    def test_render_is_bit_identical_across_calls(self, three_level_scene):
        assert np.array_equal(composite_scene(three_level_scene), composite_scene(three_level_scene))

    def test_texture_appearance_sampled_through_mask(self, rng):
        tex = rng.random((16, 16, 3))
        el = SceneElement(
            id="tex",
            level=SemanticLevel.SECONDARY,
            z=0,
            mask=rect_mask(16, 16, (2, 3, 5, 4)),
            appearance=Appearance(texture=tex),
        )
        img = composite_scene(SceneSpec(width=16, height=16, elements=[el]))
        assert np.array_equal(img[el.mask], tex[el.mask])


class TestValidation:
    def test_duplicate_ids_rejected(self):
        a = make_element("x", SemanticLevel.PRIMARY, (1, 1, 4, 4), (1.0, 0.0, 0.0))
        b = make_element("x", SemanticLevel.PRIMARY, (10, 10, 4, 4), (0.0, 1.0, 0.0))
        with pytest.raises(ValueError, match="duplicate"):
            SceneSpec(width=64, height=64, elements=[a, b])

    def test_empty_mask_rejected(self):
        with pytest.raises(ValueError, match="empty mask"):
            SceneElement(
                id="ghost",
                level=SemanticLevel.DISTRACTOR,
                z=0,
                mask=np.zeros((8, 8), dtype=bool),
                appearance=Appearance(color=(0.0, 0.0, 0.0)),
            )

    def test_mask_size_mismatch_rejected(self):
        el = make_element("big", SemanticLevel.PRIMARY, (0, 0, 4, 4), (1.0, 0.0, 0.0), height=32, width=32)
        with pytest.raises(ValueError, match="does not match"):
            SceneSpec(width=64, height=64, elements=[el])

    def test_appearance_needs_exactly_one_fill(self):
        with pytest.raises(ValueError):
            Appearance()
        with pytest.raises(ValueError):
            Appearance(color=(0.1, 0.1, 0.1), texture=np.zeros((4, 4, 3)))

    def test_rect_mask_out_of_bounds(self):
        with pytest.raises(ValueError):
            rect_mask(16, 16, (10, 10, 8, 8))


class TestRemoveOracle:
    def test_remove_only_element_leaves_background(self):
        el = make_element("solo", SemanticLevel.PRIMARY, (8, 8, 10, 10), (0.0, 0.0, 1.0))
        spec = SceneSpec(width=64, height=64, background=Appearance(color=(0.9, 0.9, 0.9)), elements=[el])
        reduced = remove_element_oracle(spec, "solo")
        bg_only = SceneSpec(width=64, height=64, background=spec.background)
        assert np.array_equal(composite_scene(reduced), composite_scene(bg_only))

    def test_unknown_id_errors(self, three_level_scene):
        with pytest.raises(KeyError):
            remove_element_oracle(three_level_scene, "nope")

    def test_diff_confined_to_visible_footprint(self, overlapping_scene):
        before = composite_scene(overlapping_scene)
        for eid in overlapping_scene.element_ids():
            after = composite_scene(remove_element_oracle(overlapping_scene, eid))
            changed = np.any(before != after, axis=-1)
            footprint = visible_footprint(overlapping_scene, eid)
            assert not np.any(changed & ~footprint)

    def test_remove_then_readd_roundtrips(self, three_level_scene):
        target = three_level_scene.element("prop")
        reduced = remove_element_oracle(three_level_scene, "prop")
        restored = SceneSpec(
            width=reduced.width,
            height=reduced.height,
            background=reduced.background,
            elements=reduced.elements + [target],
        )
        # prop is disjoint from the others, so paint order does not matter
        assert np.array_equal(composite_scene(restored), composite_scene(three_level_scene))

    def test_removals_commute_for_disjoint_elements(self, three_level_scene):
        ab = remove_element_oracle(remove_element_oracle(three_level_scene, "dot"), "prop")
        ba = remove_element_oracle(remove_element_oracle(three_level_scene, "prop"), "dot")
        assert np.array_equal(composite_scene(ab), composite_scene(ba))

    def test_render_removed_matches_reduced_spec(self, three_level_scene):
        via_render = render(three_level_scene, {"dot", "hero"})
        reduced = remove_element_oracle(remove_element_oracle(three_level_scene, "dot"), "hero")
        assert np.array_equal(via_render, composite_scene(reduced))


class TestVisibleFootprint:
    def test_unoccluded_equals_full_mask(self, three_level_scene):
        el = three_level_scene.element("hero")
        assert np.array_equal(visible_footprint(three_level_scene, "hero"), el.mask)

    def test_half_occluded_square_has_half_area(self, overlapping_scene):
        under = overlapping_scene.element("under")
        vis = visible_footprint(overlapping_scene, "under")
        assert int(vis.sum()) == int(under.mask.sum()) // 2

    def test_fully_occluded_is_empty(self):
        lower = make_element("low", SemanticLevel.SECONDARY, (10, 10, 6, 6), (1.0, 0.0, 0.0), z=1, height=32, width=32)
        upper = make_element("top", SemanticLevel.PRIMARY, (8, 8, 12, 12), (0.0, 1.0, 0.0), z=2, height=32, width=32)
        spec = SceneSpec(width=32, height=32, elements=[lower, upper])
        assert not visible_footprint(spec, "low").any()

    def test_unknown_id_errors(self, three_level_scene):
        with pytest.raises(KeyError):
            visible_footprint(three_level_scene, "nope")


def _specs_equal(a: SceneSpec, b: SceneSpec) -> bool:
    if (a.width, a.height) != (b.width, b.height) or len(a.elements) != len(b.elements):
        return False
    if not np.array_equal(composite_scene(a), composite_scene(b)):
        return False
    for ea, eb in zip(a.elements, b.elements):
        if (ea.id, ea.level, ea.z, ea.description) != (eb.id, eb.level, eb.z, eb.description):
            return False
        if not np.array_equal(ea.mask, eb.mask):
            return False
    return True


class TestSerialization:
    def test_roundtrip_rect_scene(self, three_level_scene, tmp_path):
        path = tmp_path / "scene.json"
        scene_to_json(three_level_scene, path)
        assert _specs_equal(scene_from_json(path), three_level_scene)

    def test_roundtrip_texture_and_irregular_mask(self, rng, tmp_path):
        mask = np.zeros((24, 24), dtype=bool)
        mask[4:12, 4:12] = True
        mask[6, 14] = True  # not a rectangle -> mask goes to a PNG sidecar
        el = SceneElement(
            id="blob one",
            level=SemanticLevel.SECONDARY,
            z=3,
            mask=mask,
            appearance=Appearance(texture=raster_quantized(rng, 24, 24)),
            description="textured blob",
        )
        spec = SceneSpec(width=24, height=24, background=Appearance(color=(0.0, 0.5, 1.0)), elements=[el])
        path = tmp_path / "scene.json"
        scene_to_json(spec, path)
        loaded = scene_from_json(path)
        assert _specs_equal(loaded, spec)
        assert (tmp_path / "mask_blob_one.png").exists()
        assert (tmp_path / "texture_blob_one.png").exists()

    def test_inline_doc_accepts_rect_and_color(self):
        doc = {
            "dimensions": [32, 16],
            "background": {"color": [1.0, 1.0, 1.0]},
            "elements": [
                {"id": "a", "level": "distractor", "z": 0, "mask": [2, 2, 4, 4], "appearance": {"color": [0, 0, 0]}}
            ],
        }
        spec = scene_from_doc(doc)
        assert spec.width == 32 and spec.height == 16
        assert spec.element("a").level is SemanticLevel.DISTRACTOR

    def test_inline_doc_rejects_file_references(self):
        base = {
            "dimensions": [16, 16],
            "background": {"color": [1.0, 1.0, 1.0]},
        }
        with_mask_file = dict(base, elements=[{"id": "a", "level": "primary", "mask": "m.png", "appearance": {"color": [0, 0, 0]}}])
        with pytest.raises(ValueError, match="mask files"):
            scene_from_doc(with_mask_file)
        with_texture_file = dict(base, elements=[{"id": "a", "level": "primary", "mask": [0, 0, 4, 4], "appearance": {"texture": "t.png"}}])
        with pytest.raises(ValueError, match="texture files"):
            scene_from_doc(with_texture_file)


def raster_quantized(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Random texture snapped to the 8-bit grid so PNG roundtrips exactly."""
    return np.round(rng.random((h, w, 3)) * 255.0) / 255.0

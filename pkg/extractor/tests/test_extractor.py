"""Feature extraction: media collection, encoding and MMKF output."""

import json

import numpy as np
import pytest
from PIL import Image

from mmkge.data import PROV_EXTRACTED, load_features, load_graph

from mmkf_extractor.cli import main
from mmkf_extractor.encoders import (
    ExtractorConfig,
    EncoderError,
    HashedBowEncoder,
    make_encoder,
    text_tokens,
    visual_tokens,
)
from mmkf_extractor.extract import extract_features, write_outputs
from mmkf_extractor.media import MediaError, collect_media


ENTITIES = ["cat", "dog", "fish", "ghost"]


@pytest.fixture
def dataset(tmp_path):
    d = tmp_path / "ds"
    d.mkdir()
    (d / "entities.dict").write_text(
        "".join(f"{i}\t{name}\n" for i, name in enumerate(ENTITIES)))
    (d / "relations.dict").write_text("0\teats\n")
    (d / "train.txt").write_text("0\t0\t2\n1\t0\t2\n")
    (d / "valid.txt").write_text("3\t0\t0\n")
    (d / "test.txt").write_text("1\t0\t0\n")
    (d / "descriptions.txt").write_text(
        "0\tA small domestic cat sitting on a mat.\n"
        "1\tA large friendly dog.\n"
        "2\tA goldfish in a bowl.\n"
        "3\t\n")  # entity 3 has an empty description
    return d


@pytest.fixture
def images(tmp_path):
    d = tmp_path / "imgs"
    d.mkdir()
    rng = np.random.default_rng(0)
    # entity 0: two images in a subdirectory
    (d / "0").mkdir()
    for name in ("a.png", "b.png"):
        Image.fromarray(rng.integers(0, 255, (16, 16, 3), dtype=np.uint8)
                        ).save(d / "0" / name)
    # entity 1: one flat image
    Image.fromarray(rng.integers(0, 255, (8, 8, 3), dtype=np.uint8)
                    ).save(d / "1.jpg")
    # entity 2: an unreadable file with an image extension
    (d / "2.png").write_bytes(b"not an image at all")
    return d


class TestCollectMedia:
    def test_full_coverage_in_id_order(self, dataset, images):
        media = collect_media(dataset, images)
        assert [m.entity_id for m in media] == [0, 1, 2, 3]
        assert media[0].description.startswith("A small domestic cat")
        assert media[3].description == ""
        assert len(media[0].image_paths) == 2
        assert len(media[1].image_paths) == 1
        assert media[3].image_paths == []

    def test_name_fallback_without_descriptions(self, dataset, images):
        (dataset / "descriptions.txt").unlink()
        media = collect_media(dataset, images)
        assert media[1].description == "dog"

    def test_missing_dirs(self, dataset, tmp_path):
        with pytest.raises(FileNotFoundError):
            collect_media(tmp_path / "nope")
        with pytest.raises(FileNotFoundError):
            collect_media(dataset, tmp_path / "no-imgs")

    def test_stray_description_id(self, dataset):
        (dataset / "descriptions.txt").write_text("9\tmystery\n")
        with pytest.raises(MediaError, match="ids without entities"):
            collect_media(dataset)

    def test_malformed_dict(self, dataset):
        (dataset / "entities.dict").write_text("zero cat\n")
        with pytest.raises(MediaError, match="expected"):
            collect_media(dataset)


class TestTokens:
    def test_text_tokens(self):
        assert text_tokens("A small, domestic CAT!", 10) == \
            ["a", "small", "domestic", "cat"]
        assert text_tokens("one two three", 2) == ["one", "two"]
        assert text_tokens("", 5) == []

    def test_visual_tokens_grid(self, images):
        tokens, skipped = visual_tokens([images / "1.jpg"], 100)
        assert len(tokens) == 16  # 4x4 grid per image
        assert all(t.startswith("img:r") for t in tokens)
        assert skipped == []

    def test_visual_tokens_truncated_and_skipped(self, images):
        paths = [images / "0" / "a.png", images / "2.png",
                 images / "0" / "b.png"]
        tokens, skipped = visual_tokens(paths, 20)
        assert len(tokens) == 20  # 32 grid tokens truncated
        assert skipped == [str(images / "2.png")]


class TestEncoders:
    def test_hashed_bow_deterministic_and_normalized(self):
        cfg = ExtractorConfig(dim=64)
        enc = HashedBowEncoder(cfg)
        a = enc.encode(["cat", "mat"], ["img:r0c0:fff"])
        b = HashedBowEncoder(cfg).encode(["cat", "mat"], ["img:r0c0:fff"])
        np.testing.assert_array_equal(a, b)
        assert a.dtype == np.float32
        assert np.linalg.norm(a) == pytest.approx(1.0, rel=1e-6)

    def test_different_inputs_differ(self):
        enc = HashedBowEncoder(ExtractorConfig(dim=64))
        assert not np.array_equal(enc.encode(["cat"], []),
                                  enc.encode(["dog"], []))

    def test_empty_sequence_still_encodes(self):
        enc = HashedBowEncoder(ExtractorConfig(dim=64))
        vec = enc.encode([], [])
        assert np.linalg.norm(vec) == pytest.approx(1.0, rel=1e-6)

    def test_make_encoder_ids(self):
        assert isinstance(make_encoder(ExtractorConfig()), HashedBowEncoder)
        with pytest.raises(EncoderError, match="unknown encoder"):
            make_encoder(ExtractorConfig(encoder="magic"))

    def test_config_validation(self):
        with pytest.raises(ValueError, match="dim"):
            ExtractorConfig(dim=0)
        with pytest.raises(ValueError, match="batch_size"):
            ExtractorConfig(batch_size=0)


class TestExtract:
    def test_identical_media_identical_vectors(self, dataset, images):
        (dataset / "descriptions.txt").write_text(
            "0\tsame text\n1\tsame text\n2\tother\n3\t\n")
        media = collect_media(dataset)  # no images: 0 and 1 are identical
        table, _ = extract_features(media, ExtractorConfig(dim=32))
        np.testing.assert_array_equal(table.vectors[0], table.vectors[1])
        assert not np.array_equal(table.vectors[0], table.vectors[2])

    def test_provenance_records(self, dataset, images):
        media = collect_media(dataset, images)
        cfg = ExtractorConfig(dim=32, max_visual_tokens=20)
        table, prov = extract_features(media, cfg)
        assert table.entity_count == 4
        ent = prov["entities"]
        assert ent["0"]["visual_tokens"] == 20  # truncated from 2 images
        assert ent["2"]["skipped_images"] == [str(images / "2.png")]
        assert ent["2"]["visual_tokens"] == 0
        assert ent["3"]["empty_input"] is True
        assert ent["0"]["empty_input"] is False


class TestCli:
    def run(self, dataset, images, out, extra=()):
        return main(["--dataset", str(dataset), "--images", str(images),
                     "--out", str(out), "--dim", "48", *extra])

    def test_output_passes_primary_validator(self, dataset, images, tmp_path):
        out = tmp_path / "features.mmkf"
        assert self.run(dataset, images, out) == 0
        graph = load_graph(dataset)
        table = load_features(out, graph)
        assert table.entity_count == graph.entity_count
        assert table.dim == 48
        assert table.fallback_count() == 0
        assert np.all(table.provenance == PROV_EXTRACTED)

    def test_repeated_runs_byte_identical(self, dataset, images, tmp_path):
        a, b = tmp_path / "a.mmkf", tmp_path / "b.mmkf"
        assert self.run(dataset, images, a) == 0
        assert self.run(dataset, images, b) == 0
        assert a.read_bytes() == b.read_bytes()
        assert (a.with_name("a.provenance.json").read_text()
                == b.with_name("b.provenance.json").read_text())

    def test_sidecar_written(self, dataset, images, tmp_path):
        out = tmp_path / "features.mmkf"
        self.run(dataset, images, out)
        prov = json.loads(
            out.with_name("features.provenance.json").read_text())
        assert prov["encoder"] == "hashed-bow"
        assert prov["entity_count"] == 4

    def test_images_optional(self, dataset, tmp_path):
        out = tmp_path / "features.mmkf"
        rc = main(["--dataset", str(dataset), "--out", str(out)])
        assert rc == 0
        assert out.is_file()

    def test_bad_dataset_exits_nonzero(self, tmp_path, capsys):
        rc = main(["--dataset", str(tmp_path / "missing"),
                   "--out", str(tmp_path / "f.mmkf")])
        assert rc == 2
        assert "error:" in capsys.readouterr().err

    def test_unknown_encoder_exits_nonzero(self, dataset, tmp_path, capsys):
        rc = main(["--dataset", str(dataset),
                   "--out", str(tmp_path / "f.mmkf"),
                   "--encoder", "magic"])
        assert rc == 2
        assert "unknown encoder" in capsys.readouterr().err


def test_secondary_acceptance(dataset, images, tmp_path, capsys):
    """Extractor output for a dataset passes the MMKF validator with full
    entity coverage, zero fallback flags, and byte-identical reruns."""
    outs = []
    for name in ("one.mmkf", "two.mmkf"):
        out = tmp_path / name
        rc = main(["--dataset", str(dataset), "--images", str(images),
                   "--out", str(out)])
        assert rc == 0
        outs.append(out)
    graph = load_graph(dataset)
    table = load_features(outs[0], graph)
    ok = (table.entity_count == graph.entity_count
          and table.fallback_count() == 0
          and table.dim == 768
          and outs[0].read_bytes() == outs[1].read_bytes())
    with capsys.disabled():
        print(f"{'PASS' if ok else 'FAIL'}: extractor output (validator, "
              "full coverage, zero fallbacks, byte-identical reruns)")
    assert ok

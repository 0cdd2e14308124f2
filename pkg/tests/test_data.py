import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from realign.data import (
    DataError,
    EegDataset,
    FeatureEmbedding,
    RtfError,
    average_repetitions,
    filter_by_label,
    pool_across_subjects,
    rtf_read,
    rtf_write,
    split_integrity,
    synth_generate,
)
from realign.data import datasets as dsio
from realign.data.rtf import decode, encode
from realign.rsa.analyses import rsa_compare
from realign.rsa.rdm import model_rdm


def _dataset(n=6, reps=4, channels=3, timepoints=5, seed=0, subject="s1", split="train"):
    rng = np.random.default_rng(seed)
    cats = ("food", "tool", "animal")
    return EegDataset(
        subject,
        rng.normal(size=(n, 3, 8, 8)),
        rng.normal(size=(n, reps, channels, timepoints)),
        tuple(f"{split}_c{i}" for i in range(n)),
        tuple(cats[i % 3] for i in range(n)),
        split,
    )


# -- RTF container


def test_known_2x2_f32_bytes():
    arr = np.array([[1.0, 2.0], [3.0, -0.5]], dtype=np.float32)
    expected = (
        b"RATF" + b"\x01" + b"\x01" + b"\x02"
        + b"\x02\x00\x00\x00\x00\x00\x00\x00" * 2
        + b"\x00\x00\x80\x3f" + b"\x00\x00\x00\x40" + b"\x00\x00\x40\x40" + b"\x00\x00\x00\xbf"
        + b"\x01\x00" + b"w"
    )
    assert encode({"w": arr}) == expected
    back = decode(expected, promote=False)["w"]
    assert back.dtype == np.float32 and np.array_equal(back, arr)


def test_roundtrip_bit_identical(tmp_path):
    rng = np.random.default_rng(1)
    tensors = {"a": rng.normal(size=(3, 4, 5)), "scalar": np.array(2.5), "ünï": rng.normal(size=7)}
    rtf_write(tmp_path / "x.rtf", tensors)
    back = rtf_read(tmp_path / "x.rtf")
    assert list(back) == list(tensors)
    for k in tensors:
        assert back[k].tobytes() == np.asarray(tensors[k], dtype=np.float64).tobytes()


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=0, max_size=4), st.sampled_from(["f4", "f8"]), st.integers(0, 1000))
def test_roundtrip_property(shape, dtype, seed):
    arr = np.random.default_rng(seed).normal(size=shape).astype(dtype)
    back = decode(encode({"t": arr}), promote=False)["t"]
    assert back.dtype == arr.dtype and back.shape == arr.shape and back.tobytes() == arr.tobytes()


def test_truncated_file_errors():
    buf = encode({"a": np.arange(6.0).reshape(2, 3), "b": np.ones(2)})
    for cut in (3, 10, 30, len(buf) - 1):
        with pytest.raises(RtfError, match="truncated"):
            decode(buf[:cut])


def test_bad_header_fields_report_offset():
    good = encode({"a": np.ones(2)})
    with pytest.raises(RtfError, match="magic.*offset 0"):
        decode(b"XATF" + good[4:])
    with pytest.raises(RtfError, match="version"):
        decode(good[:4] + b"\x02" + good[5:])
    with pytest.raises(RtfError, match="dtype"):
        decode(good[:5] + b"\x07" + good[6:])
    second = good + good[:4] + b"\x01\x09" + good[6:]
    with pytest.raises(RtfError, match=f"offset {len(good) + 5}"):
        decode(second)


def test_duplicate_names_rejected():
    one = encode({"a": np.ones(1)})
    with pytest.raises(RtfError, match="duplicate"):
        decode(one + one)


# -- transforms


def test_average_reps_one_is_identity():
    ds = _dataset(reps=1)
    assert np.array_equal(average_repetitions(ds).eeg, ds.eeg)


def test_average_opposite_reps_cancel():
    ds = _dataset(reps=2)
    eeg = ds.eeg.copy()
    eeg[:, 1] = -eeg[:, 0]
    assert not average_repetitions(ds.derive("test", eeg=eeg)).eeg.any()


def test_average_matches_loop_oracle():
    ds = _dataset(reps=4)
    out = average_repetitions(ds).eeg
    n, reps, c, t = ds.eeg.shape
    for i in range(n):
        for ch in range(c):
            for k in range(t):
                assert abs(out[i, 0, ch, k] - sum(ds.eeg[i, r, ch, k] for r in range(reps)) / reps) < 1e-14


def test_transforms_are_pure_and_record_provenance():
    ds = _dataset()
    before = ds.eeg.copy()
    out = average_repetitions(ds)
    assert np.array_equal(ds.eeg, before)
    assert out.provenance[-1].startswith("average_repetitions")


def test_pool_two_subjects():
    a = _dataset(seed=1)
    b = _dataset(seed=2, subject="s2").derive("same images", images=a.images)
    pooled = pool_across_subjects([a, b])
    assert pooled.reps == 8 and pooled.subject == "pooled"
    assert np.array_equal(np.sort(pooled.eeg, axis=None), np.sort(np.concatenate([a.eeg, b.eeg], axis=None)))
    assert pool_across_subjects([a]) is a


def test_pool_shape_mismatch():
    a = _dataset()
    b = _dataset(channels=4).derive("same images", images=a.images)
    with pytest.raises(DataError):
        pool_across_subjects([a, b])


def test_filter_by_label():
    ds = _dataset(n=9)
    same, counts = filter_by_label(ds, [])
    assert same is ds and counts == {"kept": 9, "removed": 0}
    out, counts = filter_by_label(ds, ["food", "train_c1"])
    oracle = [i for i in range(9) if ds.categories[i] != "food" and ds.concepts[i] != "train_c1"]
    assert out.n_images == len(oracle) == counts["kept"] and counts["removed"] == 9 - len(oracle)
    assert np.array_equal(out.eeg, ds.eeg[oracle])
    with pytest.raises(DataError):
        filter_by_label(ds, ["food", "tool", "animal"])


def test_dataset_count_mismatch():
    ds = _dataset()
    with pytest.raises(DataError):
        ds.derive("bad", concepts=ds.concepts[:-1])


def test_feature_embedding_validation():
    with pytest.raises(DataError):
        FeatureEmbedding(np.array([[1.0, np.nan], [0.0, 1.0]]), ("a", "b"))
    with pytest.raises(DataError):
        FeatureEmbedding(np.ones((3, 2)), ("a",))


# -- split integrity


def test_split_integrity_pass_and_fail():
    rep = split_integrity([_dataset(split="train"), _dataset(split="test")])
    assert rep.ok and rep.counts == {"test": 6, "train": 6}
    with pytest.raises(DataError, match="shared_concept"):
        split_integrity({"train": ["a", "shared_concept"], "test": ["shared_concept", "b"]})


def test_split_integrity_full_scale_metadata():
    rep = split_integrity({"train": [f"tr{i}" for i in range(1654)], "test": [f"te{i}" for i in range(200)]})
    assert rep.counts == {"train": 1654, "test": 200}


# -- synthetic generator


@pytest.fixture(scope="module")
def bundle():
    return synth_generate(seed=0)


def test_synth_default_shapes(bundle):
    tr = bundle.eeg_train["sub-01"]
    te = bundle.eeg_test["sub-01"]
    assert tr.eeg.shape == (32, 8, 17, 20) and te.eeg.shape == (16, 80, 17, 20)
    assert tr.channels * tr.timepoints == 340
    assert [ds.categories.count(c) for ds in bundle.fmri.values() for c in ("natural", "shape", "letter")][:3] == [50, 40, 10]
    assert bundle.features.values.shape == (16, 49)


def test_synth_splits_disjoint(bundle):
    assert split_integrity([bundle.eeg_train["sub-01"], bundle.eeg_test["sub-01"]]).ok


def test_synth_regeneration_bit_identical(bundle):
    again = synth_generate(seed=0)
    assert again.train_images.tobytes() == bundle.train_images.tobytes()
    for s in bundle.subjects:
        assert again.eeg_test[s].eeg.tobytes() == bundle.eeg_test[s].eeg.tobytes()
    assert again.fmri["fmri-01"].rois["V1"].tobytes() == bundle.fmri["fmri-01"].rois["V1"].tobytes()


def test_synth_zero_noise_equal_latents_equal_eeg():
    b = synth_generate(seed=3, noise=0.0)
    w = b.world
    z = w.latents["train"][:1]
    twin = w.clean_eeg("sub-02", np.concatenate([z, z]))
    assert np.array_equal(twin[0], twin[1])
    assert np.array_equal(b.eeg_train["sub-02"].eeg[0, 0], w.clean_eeg("sub-02", z)[0])


def test_synth_subjects_differ(bundle):
    m = [bundle.world.subjects[s].mixing for s in bundle.subjects]
    assert not np.allclose(m[0], m[1])


@pytest.mark.parametrize("seed", range(3))
def test_shared_latents_make_subject_rdms_agree(seed):
    b = synth_generate(n_images=32, latents=4, noise=0.1, seed=seed)
    rdms = [model_rdm(b.eeg_train[s].eeg_vectors()) for s in b.subjects[:2]]
    assert rsa_compare(*rdms) > 0.5


def test_synth_rejects_small_inputs():
    with pytest.raises(ValueError):
        synth_generate(n_images=6)
    with pytest.raises(ValueError):
        synth_generate(latents=1)


# -- dataset directory


def test_directory_roundtrip(tmp_path, bundle):
    s = "sub-01"
    dsio.save_images(tmp_path, bundle.train_images, bundle.test_images, bundle.fmri_images)
    dsio.save_labels(tmp_path, bundle.eeg_train[s], bundle.eeg_test[s])
    dsio.save_eeg(tmp_path, bundle.eeg_train[s], bundle.eeg_test[s])
    for ds in bundle.fmri.values():
        dsio.save_fmri(tmp_path, ds)
    dsio.save_features(tmp_path, bundle.features)
    tr, te = dsio.load_eeg(tmp_path, s)
    assert np.array_equal(tr.eeg, bundle.eeg_train[s].eeg) and te.concepts == bundle.eeg_test[s].concepts
    images, fmri = dsio.load_fmri(tmp_path)
    assert np.array_equal(images, bundle.fmri_images) and len(fmri) == 3
    emb = dsio.load_features(tmp_path)
    assert emb.names == bundle.features.names and np.array_equal(emb.values, bundle.features.values)
    assert dsio.subject_ids(tmp_path) == [s]
    with pytest.raises(DataError):
        dsio.load_eeg(tmp_path, "sub-99")


def test_features_from_csv(tmp_path):
    (tmp_path / "f.csv").write_text("size,colour\n1.0,2.0\n3.5,-1\n0,0\n", encoding="utf-8")
    emb = dsio.load_features(tmp_path / "f.csv")
    assert emb.names == ("size", "colour") and emb.values[1, 0] == 3.5


def test_manifest_roundtrip(tmp_path):
    dsio.write_manifest(tmp_path / "m.txt", {"subject": "sub-01", "seed": 3})
    assert dsio.read_manifest(tmp_path / "m.txt") == {"subject": "sub-01", "seed": "3"}
    (tmp_path / "bad.txt").write_text("no equals sign\n", encoding="utf-8")
    with pytest.raises(DataError):
        dsio.read_manifest(tmp_path / "bad.txt")


def test_header_struct_sizes():
    # u8 version/dtype/rank and u16 name length: 4 + 3 + 8*rank + payload + 2 + len(name)
    buf = encode({"ab": np.zeros((2, 3), dtype=np.float64)})
    assert len(buf) == 4 + 3 + 16 + 48 + 2 + 2
    assert struct.unpack("<H", buf[-4:-2])[0] == 2

import numpy as np
import pytest
from pytest import approx

from breathfair.audio_ingest import (CorpusEntry, CorpusIndex, Label,
                                     PatientRecord, Sex, Waveform)
from breathfair.dataset_pipeline import (EmptySelection, Instance,
                                         InsufficientPatients, SplitSpec,
                                         TooShort, balance_classes,
                                         filter_zero, group_composition,
                                         instances_to_arrays, read_feature_csv,
                                         segment_and_featurize, segment_waveform,
                                         select_recordings, split_train_test,
                                         write_feature_csv)
from breathfair.dsp_features import DspConfig
from tests.conftest import write_float32_wav


def _record(pid="p0", sex=Sex.MALE, age=60, label=Label.COPD, filename="p0.wav"):
    return PatientRecord(pid, sex, age, label, filename)


def _entry(duration, pid="p0"):
    return CorpusEntry(_record(pid=pid, filename=f"{pid}.wav"),
                       path=f"{pid}.wav", duration_seconds=duration, sample_rate=22050)


def _instance(pid, seg=0, features=None, sex=Sex.MALE, age=60, label=0):
    if features is None:
        features = np.full(40, 0.5)
    return Instance(pid, seg, np.asarray(features, dtype=float), sex, age, label)


def make_instances(n_copd, n_covid, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for label, count, prefix in ((0, n_copd, "c"), (1, n_covid, "v")):
        for k in range(count):
            sex = Sex.MALE if rng.uniform() < 0.5 else Sex.FEMALE
            out.append(_instance(f"{prefix}{k}", 0, rng.normal(size=40), sex, 60, label))
    return out


# ---------------------------------------------------------------------------
# selection and segmentation
# ---------------------------------------------------------------------------

def test_duration_threshold_is_inclusive():
    corpus = CorpusIndex(entries=(_entry(13.9, "a"), _entry(14.0, "b")), rejects=())
    kept = select_recordings(corpus, 14.0)
    assert [e.record.patient_id for e in kept.entries] == ["b"]


def test_empty_selection_raises():
    corpus = CorpusIndex(entries=(_entry(2.0),), rejects=())
    with pytest.raises(EmptySelection):
        select_recordings(corpus, 14.0)


def test_segment_waveform_counts():
    w = Waveform(np.zeros(14 * 22050), 22050)
    segments = segment_waveform(w)
    assert len(segments) == 7
    assert all(len(s) == 44100 for s in segments)


def test_segment_waveform_too_short():
    with pytest.raises(TooShort):
        segment_waveform(Waveform(np.zeros(13 * 22050), 22050))


def _wav_entry(tmp_path, samples, rate, pid="p0", sex=Sex.FEMALE, label=Label.COVID):
    path = tmp_path / f"{pid}.wav"
    write_float32_wav(path, samples, rate)
    rec = PatientRecord(pid, sex, 47, label, f"{pid}.wav")
    return CorpusEntry(rec, path, len(samples) / rate, rate)


def test_segment_and_featurize_builds_seven_instances(tmp_path):
    rng = np.random.default_rng(7)
    rate = 22050
    entry = _wav_entry(tmp_path, rng.uniform(-0.5, 0.5, 14 * rate).astype("f4"), rate)
    instances = segment_and_featurize(entry, DspConfig(), rate)
    assert [i.segment_index for i in instances] == list(range(7))
    assert all(i.patient_id == "p0" and i.sex is Sex.FEMALE and
               i.age == 47 and i.label == 1 for i in instances)
    assert all(i.features.shape == (40,) for i in instances)


def test_featurization_uses_only_first_fourteen_seconds(tmp_path):
    rng = np.random.default_rng(8)
    rate = 22050
    head = rng.uniform(-0.5, 0.5, 14 * rate).astype("f4")
    tail = np.ones(6 * rate, dtype="f4")  # loud suffix that must be ignored
    short = _wav_entry(tmp_path, head, rate, pid="short")
    long = _wav_entry(tmp_path, np.concatenate([head, tail]), rate, pid="long")
    a = segment_and_featurize(short, DspConfig(), rate)
    b = segment_and_featurize(long, DspConfig(), rate)
    for ia, ib in zip(a, b):
        assert np.array_equal(ia.features, ib.features)


# ---------------------------------------------------------------------------
# zero filtering and balancing
# ---------------------------------------------------------------------------

def test_filter_zero_identity_without_zero_vectors():
    instances = [_instance("a"), _instance("b")]
    assert filter_zero(instances) == instances


def test_filter_zero_removes_whole_patient():
    instances = [_instance("a", seg, np.zeros(40) if seg == 3 else np.full(40, 0.5))
                 for seg in range(7)]
    instances += [_instance("b", seg) for seg in range(7)]
    kept = filter_zero(instances)
    assert len(kept) == 7
    assert {i.patient_id for i in kept} == {"b"}


def test_balance_downsamples_majority_exactly():
    instances = make_instances(29, 319)
    rng = np.random.default_rng(0)
    balanced = balance_classes(instances, rng)
    labels = [i.label for i in balanced]
    assert labels.count(0) == 29 and labels.count(1) == 29
    originals = {id(i) for i in instances}
    assert all(id(i) in originals for i in balanced)


def test_balance_identity_when_already_balanced():
    instances = make_instances(10, 10)
    rng = np.random.default_rng(0)
    assert balance_classes(instances, rng) == instances


def test_group_composition_counts():
    instances = [_instance("a", sex=Sex.MALE, label=1),
                 _instance("b", sex=Sex.FEMALE, label=1),
                 _instance("c", sex=Sex.MALE, label=0)]
    comp = group_composition(instances)
    assert comp == {"copd": {"male": 1, "female": 0}, "covid": {"male": 1, "female": 1}}


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------

def seven_segment_cohort(n_patients_per_label=29, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for label, prefix in ((0, "c"), (1, "v")):
        for k in range(n_patients_per_label):
            sex = Sex.MALE if k % 2 == 0 else Sex.FEMALE
            for seg in range(7):
                out.append(_instance(f"{prefix}{k}", seg, rng.normal(size=40),
                                     sex, 60, label))
    return out


def test_grouped_split_keeps_patients_together():
    instances = seven_segment_cohort(10)
    train, test = split_train_test(instances, SplitSpec(), np.random.default_rng(1))
    train_pids = {i.patient_id for i in train}
    test_pids = {i.patient_id for i in test}
    assert not (train_pids & test_pids)
    assert train_pids | test_pids == {i.patient_id for i in instances}
    assert len(train) + len(test) == len(instances)


def test_split_deterministic_given_seed():
    instances = seven_segment_cohort(12)
    a = split_train_test(instances, SplitSpec(), np.random.default_rng(99))
    b = split_train_test(instances, SplitSpec(), np.random.default_rng(99))
    assert a == b


def test_split_size_within_one_patient_of_target():
    instances = seven_segment_cohort(29)  # 406 instances
    _, test = split_train_test(instances, SplitSpec(test_fraction=0.3),
                               np.random.default_rng(5))
    assert abs(len(test) - 122) <= 7


def test_singleton_sex_cell_stays_in_train():
    # one lone female copd patient: the model must still see that cell
    instances = seven_segment_cohort(6)
    lone = [_instance("lone", seg, np.zeros(40) + 1.0, Sex.FEMALE, 60, 0)
            for seg in range(7)]
    train, test = split_train_test(instances + lone, SplitSpec(),
                                   np.random.default_rng(2))
    assert all(i.patient_id != "lone" for i in test)
    assert sum(i.patient_id == "lone" for i in train) == 7


def test_split_insufficient_patients():
    instances = [_instance("only", seg, label=0) for seg in range(7)]
    instances += [_instance("v0", seg, label=1) for seg in range(7)]
    instances += [_instance("v1", seg, label=1) for seg in range(7)]
    with pytest.raises(InsufficientPatients):
        split_train_test(instances, SplitSpec(), np.random.default_rng(0))


def test_ungrouped_split_stratifies_labels():
    instances = make_instances(40, 40)
    spec = SplitSpec(test_fraction=0.25, group_by_patient=False)
    train, test = split_train_test(instances, spec, np.random.default_rng(3))
    test_labels = [i.label for i in test]
    assert test_labels.count(0) == approx(test_labels.count(1), abs=2)
    assert len(test) == approx(20, abs=2)


# ---------------------------------------------------------------------------
# model vectors and the feature cache
# ---------------------------------------------------------------------------

def test_model_vector_layout():
    inst = _instance("a", 2, np.arange(40.0), Sex.MALE, 63, 1)
    vec = inst.model_vector()
    assert vec.shape == (42,)
    assert vec[0] == 1.0 and vec[1] == 63.0
    assert np.array_equal(vec[2:], np.arange(40.0))
    assert _instance("b", 0, np.arange(40.0), Sex.FEMALE).model_vector()[0] == 0.0


def test_instances_to_arrays():
    instances = [_instance("a", sex=Sex.FEMALE, label=1), _instance("b", sex=Sex.MALE)]
    X, y, groups, pids = instances_to_arrays(instances)
    assert X.shape == (2, 42)
    assert list(y) == [1, 0]
    assert groups == ["female", "male"]
    assert pids == ["a", "b"]


def test_feature_csv_round_trip(tmp_path):
    rng = np.random.default_rng(13)
    instances = [_instance(f"p{k}", k % 7, rng.normal(size=40),
                           Sex.FEMALE if k % 2 else Sex.MALE, 30 + k, k % 2)
                 for k in range(10)]
    path = tmp_path / "features.csv"
    write_feature_csv(instances, path)
    back = read_feature_csv(path)
    assert len(back) == 10
    for orig, loaded in zip(instances, back):
        assert loaded.patient_id == orig.patient_id
        assert loaded.segment_index == orig.segment_index
        assert loaded.sex == orig.sex and loaded.age == orig.age
        assert loaded.label == orig.label
        assert loaded.features == approx(orig.features, abs=5e-7)  # 6-decimal cache


def test_feature_csv_header_validated(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValueError):
        read_feature_csv(path)

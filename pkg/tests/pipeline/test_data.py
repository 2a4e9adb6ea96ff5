from dataclasses import replace

import numpy as np
import pytest

from lrpipe.pipeline import DatasetSpec, gen_dataset, load_dataset, save_dataset

SPEC = DatasetSpec(input_dim=8, num_classes=3, planted_rank=2, teacher_hidden=(6,), n_train=150, n_calibration=45,
                   n_test=60, n_rehab=30, seed=1)


@pytest.fixture(scope='module')
def dataset():
    return gen_dataset(SPEC)


def test_sizes_and_balance(dataset):
    assert [len(dataset.split(name)) for name in ['train', 'calibration', 'test', 'rehab']] == [150, 45, 60, 30]
    assert all(batch.dim == 8 for batch in [dataset.train, dataset.calibration, dataset.test, dataset.rehab])

    counts = np.array(dataset.teacher['class_counts'])
    assert counts.sum() == 285
    assert np.all(np.abs(counts - 95) <= 9.5)
    # every split keeps the class proportions
    for batch in [dataset.train, dataset.calibration, dataset.test, dataset.rehab]:
        proportions = np.bincount(batch.labels, minlength=3) / len(batch)
        np.testing.assert_allclose(proportions, counts / counts.sum(), atol=.05)


def test_disjoint(dataset):
    columns = np.concatenate([dataset.train.inputs, dataset.calibration.inputs, dataset.test.inputs,
                              dataset.rehab.inputs], 1)
    assert np.unique(columns, axis=1).shape[1] == 285


def test_teacher(dataset):
    assert dataset.teacher['widths'] == [8, 6, 3]
    assert dataset.teacher['ranks'] == [2, 2]
    assert dataset.teacher['seed'] == 1
    assert 'standardized' in dataset.teacher['labeling']


def test_determinism(dataset):
    other = gen_dataset(SPEC)
    for name in ['train', 'calibration', 'test', 'rehab']:
        np.testing.assert_array_equal(dataset.split(name).inputs, other.split(name).inputs)
        np.testing.assert_array_equal(dataset.split(name).labels, other.split(name).labels)
    assert dataset.teacher == other.teacher

    shifted = gen_dataset(replace(SPEC, seed=2))
    assert not np.array_equal(dataset.train.inputs, shifted.train.inputs)


def test_no_rehab_split():
    dataset = gen_dataset(DatasetSpec(input_dim=4, num_classes=2, planted_rank=1, teacher_hidden=(4,),
                                      n_train=40, n_calibration=10, n_test=10))
    assert dataset.rehab is None
    with pytest.raises(ValueError, match='no "rehab" split'):
        dataset.split('rehab')
    with pytest.raises(ValueError, match='Unknown split'):
        dataset.split('validation')


def test_save_load(dataset, tmpdir):
    path = tmpdir / 'dataset.npz'
    save_dataset(dataset, path)
    restored = load_dataset(path)

    for name in ['train', 'calibration', 'test', 'rehab']:
        np.testing.assert_array_equal(dataset.split(name).inputs, restored.split(name).inputs)
        np.testing.assert_array_equal(dataset.split(name).labels, restored.split(name).labels)
    assert restored.teacher == dataset.teacher

    # equal datasets produce equal files
    save_dataset(restored, tmpdir / 'other.npz')
    assert open(path, 'rb').read() == open(tmpdir / 'other.npz', 'rb').read()


def test_unbalanced(monkeypatch):
    monkeypatch.setattr('lrpipe.pipeline.data.BALANCE_TOLERANCE', -1)
    with pytest.raises(ValueError, match='balanced'):
        gen_dataset(SPEC)

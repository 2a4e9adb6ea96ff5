"""Directional checks on the full planted grid. Slow: run with ``pytest -m integration``."""
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from lrpipe.pipeline import load_config, run_experiment

pytestmark = pytest.mark.integration

CONFIG = Path(__file__).resolve().parents[2] / 'configs' / 'planted.json'


@pytest.fixture(scope='module')
def report(tmp_path_factory):
    config = load_config(CONFIG)
    config = replace(config, compression=replace(config.compression, ratios=(.4, .5, .6)))
    return run_experiment(config, tmp_path_factory.mktemp('planted'), workers=4)


@pytest.fixture(scope='module')
def frame(report):
    return report.frame()


def select(frame, **conditions):
    for name, value in conditions.items():
        frame = frame[frame[name] == value]
    return frame.set_index('seed')


def test_no_failures(report):
    assert report.failures == []
    # 2 methods x 3 ratios x 2 lambdas x 10 seeds, 4 stages each
    assert len(report.rows) == 120 * 4


def test_teacher_is_learnable(frame):
    base = select(frame, method='whitened_svd', ratio=.5, **{'lambda': 0.}, stage='base')
    assert base['accuracy'].median() >= .9


def test_prehab_lowers_the_tail_energy(report):
    def tails(lam, stage):
        return {
            (row['seed'], layer['layer']): layer['tail_energy'] for row in report.rows
            if (row['method'], row['ratio'], row['lambda'], row['stage']) == ('whitened_svd', .5, lam, stage)
            for layer in row['spectra']
        }

    before, after = tails(.1, 'base'), tails(.1, 'prehab')
    assert np.median([after[key] - before[key] for key in before]) < 0


@pytest.mark.parametrize('ratio', [.5, .6])
def test_prehab_improves_surgery(frame, ratio):
    plain = select(frame, method='whitened_svd', ratio=ratio, **{'lambda': 0.}, stage='surgery')
    regularized = select(frame, method='whitened_svd', ratio=ratio, **{'lambda': .1}, stage='surgery')
    assert regularized['accuracy'].median() > plain['accuracy'].median()


def test_gains_grow_with_compression(report):
    gains = {
        (m['ratio'], m['stage']): m['gain_accuracy'] for m in report.to_dict()['median_gains']
        if m['method'] == 'whitened_svd' and m['lambda'] == .1
    }
    assert gains[.6, 'surgery'] >= gains[.4, 'surgery']


def test_whitening_beats_plain_svd(frame):
    plain = select(frame, method='plain_svd', ratio=.5, **{'lambda': 0.}, stage='surgery')
    whitened = select(frame, method='whitened_svd', ratio=.5, **{'lambda': 0.}, stage='surgery')
    assert whitened['accuracy'].median() > plain['accuracy'].median()


def test_rehab_recovers(frame):
    surgery = select(frame, ratio=.5, stage='surgery').reset_index()
    rehab = select(frame, ratio=.5, stage='rehab').reset_index()
    keys = ['method', 'lambda', 'seed']
    paired = pd.merge(surgery, rehab, on=keys, suffixes=('_surgery', '_rehab'))
    assert len(paired) == 40
    assert paired['loss_rehab'].median() <= paired['loss_surgery'].median()

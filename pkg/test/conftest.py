import csv

import numpy as np
import pytest

from metaflow._vendor.click.testing import CliRunner


def read_csv_text(text):
    lines = [l for l in text.splitlines() if l and not l.startswith("#")]
    return list(csv.DictReader(lines))


def loglog_slope(x, y):
    return float(np.polyfit(np.log10(x), np.log10(y), 1)[0])


@pytest.fixture
def runner():
    return CliRunner(mix_stderr=False)


@pytest.fixture
def parse_csv():
    return read_csv_text

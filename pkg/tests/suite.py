"""Shared, cached runs of the expensive end-to-end computations."""

from functools import lru_cache

from maslovindex import morse, presets
from maslovindex.errors import CertificationFailure

RANDOM_SEED = 0


@lru_cache(maxsize=None)
def random_profiles():
    return tuple(presets.random_suite(RANDOM_SEED))


def _report(profile):
    try:
        return morse.morse_report(profile)
    except CertificationFailure as exc:
        return exc.report


@lru_cache(maxsize=None)
def preset_report(name):
    return _report(presets.PRESETS[name].profile)


@lru_cache(maxsize=None)
def random_report(i):
    return _report(random_profiles()[i])


def all_reports():
    out = [(name, preset_report(name)) for name in presets.PRESETS]
    out += [(f"random-{i}", random_report(i)) for i in range(len(random_profiles()))]
    return out


# acceptance verdict lines, keyed by criterion number
ACCEPTANCE = {}

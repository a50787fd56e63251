import pytest

from daemon_ngram.corpus import load_corpus
from daemon_ngram.synthgen import SynthSpec, generate

_acceptance_results = {}


@pytest.fixture(scope="session")
def small_corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("small")
    spec = SynthSpec.standard(n_families=3, files_per_family=12, file_size_bytes=1024,
                              n_decoys=2, seed=3)
    manifest = generate(spec, out)
    return str(out), manifest


@pytest.fixture(scope="session")
def small_corpus(small_corpus_dir):
    root, manifest = small_corpus_dir
    return load_corpus(root, manifest)


@pytest.fixture(scope="session")
def acceptance_corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance")
    spec = SynthSpec.standard(n_families=6, files_per_family=50, file_size_bytes=4096,
                              signatures_per_family=2, probability=0.8, n_decoys=3, seed=11)
    manifest = generate(spec, out)
    return str(out), manifest


@pytest.fixture(scope="session")
def acceptance_corpus(acceptance_corpus_dir):
    root, manifest = acceptance_corpus_dir
    return load_corpus(root, manifest)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when not in ("setup", "call"):
        return
    n, title = marker.args
    prev = _acceptance_results.get(n, (title, "PASS"))
    if rep.failed or (rep.when == "setup" and rep.skipped):
        _acceptance_results[n] = (title, "FAIL")
    elif rep.when == "call":
        _acceptance_results[n] = (title, prev[1])


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_acceptance_results):
        title, status = _acceptance_results[n]
        terminalreporter.write_line(f"criterion {n:>2}: {status}  {title}")


SMALL_PARAMS = dict(factors={4: 1.0, 8: 1.0, 16: 1.0, 32: 1.0}, alpha=0.5, beta=64, budget=60,
                    n_trees=40, feature_cap=30, seed=1)


@pytest.fixture(scope="session")
def small_model(small_corpus):
    from daemon_ngram.pipeline import DaemonClassifier
    clf = DaemonClassifier(**SMALL_PARAMS)
    clf.fit([s.bytes for s in small_corpus], [s.family for s in small_corpus])
    return clf

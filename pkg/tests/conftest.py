import numpy as np
import pytest

from accentmask.autodiff import _kernels_py, kernels

BACKENDS = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run a test once per available kernel backend."""
    if request.param == "python":
        for name in ("conv3x3_forward", "conv3x3_backward", "maxpool2_forward", "maxpool2_backward"):
            monkeypatch.setattr(kernels, name, getattr(_kernels_py, name))
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def band_corpus(tmp_path_factory):
    """Six 3 s utterances (two classes) with one dev row; returns the manifest path."""
    from accentmask.synthetic import write_band_corpus
    return write_band_corpus(tmp_path_factory.mktemp("corpus"), n_utterances=6, seed=11, dev_every=3)


@pytest.fixture(scope="session")
def small_checkpoint(tmp_path_factory):
    """Untrained two-class model on 80x48 inputs, labelled like the band corpus."""
    from accentmask import classifier
    model = classifier.build(classifier.ClassifierConfig(n_classes=2, input_shape=(1, 80, 48)),
                             seed=3, labels=["high", "low"])
    path = tmp_path_factory.mktemp("ckpt") / "model.acmk"
    classifier.save_checkpoint(model, path)
    return path


# -- acceptance summary -------------------------------------------------------

ACCEPTANCE_RESULTS: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[number])

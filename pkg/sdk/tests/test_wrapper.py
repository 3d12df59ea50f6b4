"""Recorder and lifecycle behavior of EnvWrapper against an in-memory store."""

import numpy as np
import pytest

from tupli_sdk import (
    DuplicateBenchmark,
    EnvWrapper,
    GridTimeSeriesEnv,
    NotFoundError,
    SerializationError,
    StorageError,
    artifact_hash,
    as_float_list,
    benchmark_hash,
)


class FakeStorage:
    """In-memory stand-in exposing the same surface as the real clients."""

    def __init__(self):
        self.benchmarks: dict[str, dict] = {}
        self.artifacts: dict[str, bytes] = {}
        self.episodes: list[dict] = []
        self.fail_episodes = 0  # raise on this many upcoming put_episode calls

    def put_benchmark(self, serialized, metadata):
        benchmark_id = benchmark_hash(serialized)
        if benchmark_id in self.benchmarks:
            raise DuplicateBenchmark(409, "DUPLICATE_BENCHMARK", benchmark_id)
        record = {"id": benchmark_id, "serialized": serialized, "metadata": metadata}
        self.benchmarks[benchmark_id] = record
        return record

    def get_benchmark(self, benchmark_id):
        try:
            return self.benchmarks[benchmark_id]
        except KeyError:
            raise NotFoundError(404, "NOT_FOUND", benchmark_id) from None

    def put_artifact(self, content, metadata):
        artifact_id = artifact_hash(content, "fake")
        self.artifacts.setdefault(artifact_id, content)
        return artifact_id

    def get_artifact(self, artifact_id):
        try:
            return self.artifacts[artifact_id]
        except KeyError:
            raise NotFoundError(404, "NOT_FOUND", artifact_id) from None

    def put_episode(self, benchmark_id, tuples, metadata):
        if self.fail_episodes:
            self.fail_episodes -= 1
            raise StorageError(503, "UNAVAILABLE", "injected outage")
        record = {
            "id": str(len(self.episodes)),
            "benchmark_id": benchmark_id,
            "tuples": tuples,
            "metadata": metadata,
        }
        self.episodes.append(record)
        return record


class ScriptedEnv:
    """Plays back a fixed list of step results; reset rewinds the script."""

    def __init__(self, steps):
        self.params = {"steps": len(steps)}
        self._steps = steps
        self._i = 0

    def reset(self, *, seed=None, options=None):
        self._i = 0
        return [0.0], {}

    def step(self, action):
        result = self._steps[self._i]
        self._i += 1
        return result


def scripted(n: int, terminated=False, truncated=False) -> ScriptedEnv:
    steps = []
    for i in range(n):
        last = i == n - 1
        steps.append(
            (
                [float(i + 1), 0.5],
                0.25 * i,
                terminated and last,
                truncated and last,
                {"i": i},
            )
        )
    return ScriptedEnv(steps)


@pytest.fixture()
def fake():
    return FakeStorage()


def stored_wrapper(env, fake, **kwargs) -> EnvWrapper:
    wrapper = EnvWrapper(env, fake, **kwargs)
    wrapper.store("scripted", "test benchmark")
    return wrapper


def play(wrapper, n):
    wrapper.reset(seed=0)
    for i in range(n):
        wrapper.step(float(i))


def test_terminated_episode_posts_once(fake):
    wrapper = stored_wrapper(scripted(3, terminated=True), fake)
    play(wrapper, 3)

    assert len(fake.episodes) == 1
    episode = fake.episodes[0]
    assert episode["benchmark_id"] == wrapper.benchmark_id
    tuples = episode["tuples"]
    assert [t["state"] for t in tuples] == [[1.0, 0.5], [2.0, 0.5], [3.0, 0.5]]
    assert [t["action"] for t in tuples] == [[0.0], [1.0], [2.0]]
    assert [t["reward"] for t in tuples] == [0.0, 0.25, 0.5]
    assert [t["terminated"] for t in tuples] == [False, False, True]
    assert [t["timeout"] for t in tuples] == [False, False, False]
    assert [t["info"] for t in tuples] == [{"i": 0}, {"i": 1}, {"i": 2}]
    assert wrapper.buffered == 0


def test_truncation_maps_to_timeout(fake):
    wrapper = stored_wrapper(scripted(2, truncated=True), fake)
    play(wrapper, 2)

    (episode,) = fake.episodes
    last = episode["tuples"][-1]
    assert last["timeout"] is True
    assert last["terminated"] is False


def test_recording_disabled_posts_nothing(fake):
    wrapper = stored_wrapper(scripted(2, terminated=True), fake, recording=False)
    play(wrapper, 2)

    assert fake.episodes == []
    assert wrapper.buffered == 0


def test_step_results_pass_through_unchanged(fake):
    env = scripted(2, terminated=True)
    wrapper = stored_wrapper(env, fake)
    wrapper.reset(seed=0)
    assert wrapper.step(0.0) == env._steps[0]


def test_reset_discards_partial_episode(fake):
    wrapper = stored_wrapper(scripted(3, terminated=True), fake)
    wrapper.reset(seed=0)
    wrapper.step(0.0)
    assert wrapper.buffered == 1

    wrapper.reset(seed=0)
    assert wrapper.buffered == 0
    assert fake.episodes == []

    play(wrapper, 3)
    assert len(fake.episodes) == 1
    assert len(fake.episodes[0]["tuples"]) == 3


def test_no_post_before_terminal_step(fake):
    wrapper = stored_wrapper(scripted(3, terminated=True), fake)
    wrapper.reset(seed=0)
    wrapper.step(0.0)
    wrapper.step(1.0)
    assert fake.episodes == []
    assert wrapper.buffered == 2


def test_flush_failure_raises_and_retains_buffer(fake):
    wrapper = stored_wrapper(scripted(2, terminated=True), fake)
    wrapper.reset(seed=0)
    wrapper.step(0.0)
    fake.fail_episodes = 1
    with pytest.raises(StorageError):
        wrapper.step(1.0)
    assert wrapper.buffered == 2
    assert fake.episodes == []

    wrapper.flush()  # retry after the outage
    assert wrapper.buffered == 0
    assert len(fake.episodes) == 1
    assert len(fake.episodes[0]["tuples"]) == 2


def test_episode_metadata_override_lasts_one_reset(fake):
    wrapper = stored_wrapper(
        scripted(1, terminated=True), fake, episode_metadata={"policy": "default"}
    )
    wrapper.reset(seed=0, episode_metadata={"policy": "special"})
    wrapper.step(0.0)
    wrapper.reset(seed=0)
    wrapper.step(0.0)

    assert [e["metadata"] for e in fake.episodes] == [
        {"policy": "special"},
        {"policy": "default"},
    ]


def test_flush_before_store_raises(fake):
    wrapper = EnvWrapper(scripted(1, terminated=True), fake)
    wrapper.reset(seed=0)
    with pytest.raises(SerializationError):
        wrapper.step(0.0)
    assert wrapper.buffered == 1  # nothing was lost


def test_default_serialize_requires_params_dict(fake):
    class Bare:
        def reset(self, *, seed=None, options=None):
            return [0.0], {}

        def step(self, action):
            return [0.0], 0.0, True, False, {}

    with pytest.raises(SerializationError):
        EnvWrapper(Bare(), fake).store("bare", "no params")


def test_store_then_load_roundtrip(fake):
    env = GridTimeSeriesEnv(width=5, series=[1.0, 2.0], max_steps=4)
    benchmark_id = EnvWrapper(env, fake).store("grid", "inline params")

    loaded = EnvWrapper.load(benchmark_id, fake)
    assert isinstance(loaded.env, GridTimeSeriesEnv)
    assert loaded.env.params == env.params
    assert loaded.benchmark_id == benchmark_id


def test_duplicate_store_raises(fake):
    stored_wrapper(scripted(1, terminated=True), fake)
    with pytest.raises(DuplicateBenchmark):
        stored_wrapper(scripted(1, terminated=True), fake)


def test_load_unknown_benchmark(fake):
    with pytest.raises(NotFoundError):
        EnvWrapper.load("0" * 64, fake)


# -- as_float_list -------------------------------------------------------------------

def test_as_float_list_shapes():
    assert as_float_list(3) == [3.0]
    assert as_float_list(2.5) == [2.5]
    assert as_float_list([1, [2, 3.5]]) == [1.0, 2.0, 3.5]
    assert as_float_list(np.array([[1.0, 2.0], [3.0, 4.0]])) == [1.0, 2.0, 3.0, 4.0]
    assert as_float_list(np.float64(0.5)) == [0.5]


def test_as_float_list_rejects_non_numeric():
    with pytest.raises(TypeError):
        as_float_list(True)
    with pytest.raises(TypeError):
        as_float_list("7")
    with pytest.raises(TypeError):
        as_float_list({"x": 1.0})

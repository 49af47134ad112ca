import random

import pytest

from slotproj import AnnotatedUtterance, Dataset

SLOT_POOLS = {
    "city": ("london", "paris", "berlin", "tokyo", "lisbon"),
    "music_artist": ("radiohead", "coltrane", "bjork"),
    "service": ("spotify", "tidal"),
    "time": ("nine", "ten", "noon", "nine am", "five thirty"),
}

FILLER = ("play", "the", "weather", "in", "on", "set", "alarm", "for", "me",
          "tomorrow", "please", "find", "a", "flight", "to", "from", "book")

INTENTS = ("play_music", "check_weather", "set_alarm")


def make_utterance(rng: random.Random, utt_id: str, locale: str = "en") -> AnnotatedUtterance:
    tokens: list[str] = []
    labels: list[str] = []
    n_spans = rng.randint(0, 3)
    for word in rng.sample(FILLER, rng.randint(1, 3)):
        tokens.append(word)
        labels.append("O")
    for _ in range(n_spans):
        slot_type = rng.choice(sorted(SLOT_POOLS))
        value_tokens = rng.choice(SLOT_POOLS[slot_type]).split()
        labels.extend([f"B-{slot_type}"] + [f"I-{slot_type}"] * (len(value_tokens) - 1))
        tokens.extend(value_tokens)
        for word in rng.sample(FILLER, rng.randint(1, 2)):
            tokens.append(word)
            labels.append("O")
    return AnnotatedUtterance(
        id=utt_id,
        tokens=tuple(tokens),
        labels=tuple(labels),
        intent=rng.choice(INTENTS),
        locale=locale,
    )


def make_dataset(n: int = 100, locale: str = "en", seed: int = 0) -> Dataset:
    rng = random.Random(seed)
    return Dataset(
        locale=locale,
        examples=tuple(make_utterance(rng, str(i), locale) for i in range(n)),
    )


@pytest.fixture
def play_utterance() -> AnnotatedUtterance:
    return AnnotatedUtterance(
        id="1",
        tokens=("play", "radiohead", "on", "spotify"),
        labels=("O", "B-music_artist", "O", "B-service"),
        intent="to_play_music",
        locale="en",
    )


@pytest.fixture
def john_en() -> AnnotatedUtterance:
    return AnnotatedUtterance(
        id="j1",
        tokens=("My", "name", "is", "John", "and", "I", "live", "in", "London"),
        labels=("O", "O", "O", "B-name", "O", "O", "O", "O", "B-city"),
        intent="introduce",
        locale="en-US",
    )


@pytest.fixture
def john_de() -> AnnotatedUtterance:
    return AnnotatedUtterance(
        id="j1",
        tokens=("Mein", "Name", "ist", "John", "und", "ich", "wohne", "in", "London"),
        labels=("O", "O", "O", "B-name", "O", "O", "O", "O", "B-city"),
        intent="introduce",
        locale="de-DE",
    )


@pytest.fixture
def small_dataset() -> Dataset:
    return make_dataset(n=20, seed=7)

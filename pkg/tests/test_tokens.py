import pytest
from hypothesis import given
from hypothesis import strategies as st

from looptab.tokens import (
    ParseError,
    Token,
    TokenCategory,
    parse_tokens,
    render_tokens,
    token,
)


def test_new_measure_is_structure():
    stream = parse_tokens("new_measure")
    assert len(stream) == 1
    assert stream[0].category is TokenCategory.STRUCTURE


def test_empty_input_is_empty_stream():
    assert parse_tokens("") == []
    assert parse_tokens("   \n  ") == []


def test_note_and_wait():
    stream = parse_tokens("distorted0:note:s4:f7 wait:480")
    note, wait = stream
    assert note.category is TokenCategory.NOTE
    assert note.fields == {"track": "distorted0", "string": 4, "fret": 7}
    assert wait.category is TokenCategory.WAIT
    assert wait.fields == {"ticks": 480}


def test_malformed_token_reports_index():
    with pytest.raises(ParseError) as exc:
        parse_tokens("note:banana")
    assert exc.value.index == 0
    with pytest.raises(ParseError) as exc:
        parse_tokens("new_measure wait:480 frob:nope")
    assert exc.value.index == 2


@pytest.mark.parametrize("raw,category", [
    ("artist:metallica", TokenCategory.HEADER),
    ("tempo:120", TokenCategory.HEADER),
    ("time_signature:4", TokenCategory.HEADER),
    ("start", TokenCategory.HEADER),
    ("end", TokenCategory.HEADER),
    ("valence:high", TokenCategory.SONG_CONTROL),
    ("arousal:low", TokenCategory.SONG_CONTROL),
    ("mode:minor", TokenCategory.SONG_CONTROL),
    ("cloud_diameter:q1", TokenCategory.BAR_CONTROL),
    ("cloud_momentum:q4", TokenCategory.BAR_CONTROL),
    ("tensile_strain:q2", TokenCategory.BAR_CONTROL),
    ("bass:note:s4:f0", TokenCategory.NOTE),
    ("drums:note:38", TokenCategory.NOTE),
    ("wait:960", TokenCategory.WAIT),
    ("nfx:palm_mute", TokenCategory.EFFECT),
])
def test_grammar_coverage(raw, category):
    t = token(raw)
    assert t.category is category
    assert t.render() == raw


@pytest.mark.parametrize("raw", [
    "tempo:20", "tempo:999", "tempo:fast",
    "wait:0", "wait:-5",
    "valence:medium", "mode:dorian",
    "cloud_diameter:q5", "tensile_strain:high",
    "distorted0:note:s4:f31", "distorted0:note:f7", "drums:note:200",
    "banana", "nfx:", ":", "distorted9:note:s1:f0",
])
def test_rejected_tokens(raw):
    with pytest.raises(ParseError):
        token(raw)


def test_unknown_effect_names_pass_through():
    t = token("nfx:bend_release_3.5")
    assert t.category is TokenCategory.EFFECT
    assert t.fields["name"] == "bend_release_3.5"


def test_render_round_trip():
    text = "valence:high arousal:low mode:major time_signature:4 tempo:150 start " \
           "new_measure cloud_diameter:q2 distorted0:note:s6:f0 nfx:palm_mute wait:960 end"
    assert render_tokens(parse_tokens(text)) == text


def test_token_equality_ignores_parsed_fields():
    assert token("wait:480") == Token(TokenCategory.WAIT, "wait:480")


guitar_notes = st.builds(
    "{}:note:s{}:f{}".format,
    st.sampled_from(("distorted0", "distorted1", "distorted2", "clean0", "clean1", "leads")),
    st.integers(1, 6), st.integers(0, 30))
valid_tokens = st.one_of(
    guitar_notes,
    st.builds("bass:note:s{}:f{}".format, st.integers(1, 4), st.integers(0, 30)),
    st.builds("drums:note:{}".format, st.integers(0, 127)),
    st.builds("wait:{}".format, st.integers(1, 10_000)),
    st.builds("tempo:{}".format, st.integers(30, 300)),
    st.sampled_from(("new_measure", "start", "end", "valence:high", "arousal:low",
                     "mode:minor", "cloud_diameter:q3", "nfx:vibrato")),
)


@given(st.lists(valid_tokens, max_size=40))
def test_any_valid_stream_round_trips(raws):
    text = " ".join(raws)
    assert render_tokens(parse_tokens(text)) == text


@given(valid_tokens)
def test_single_token_render_is_identity(raw):
    assert token(raw).render() == raw

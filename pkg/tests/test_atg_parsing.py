"""List-response and pair-response parsing."""

import pytest

from coder.atg.parsing import dedupe_casefold, parse_list_response, split_pair_response
from coder.errors import ResponseParseError


class TestParseList:
    def test_numbered(self):
        assert parse_list_response("1. Cheetah\n2. Jaguar") == ["Cheetah", "Jaguar"]

    def test_bulleted(self):
        assert parse_list_response("- long tail\n- short fur") == ["long tail", "short fur"]

    def test_plain_lines(self):
        assert parse_list_response("wings\nantennae\n") == ["wings", "antennae"]

    def test_mixed_enumerators_and_quotes(self):
        text = '* "spotted coat."\n3) long whiskers,\n• short ears'
        assert parse_list_response(text) == ["spotted coat", "long whiskers", "short ears"]

    def test_skips_blank_lines(self):
        assert parse_list_response("a\n\n\nb") == ["a", "b"]

    def test_empty_response(self):
        with pytest.raises(ResponseParseError):
            parse_list_response("")

    def test_only_punctuation(self):
        with pytest.raises(ResponseParseError) as err:
            parse_list_response("...\n- ")
        assert err.value.raw == "...\n- "


class TestDedupe:
    def test_casefold_keeps_first_spelling(self):
        assert dedupe_casefold(["Cheetah", "cheetah", "Jaguar"]) == ["Cheetah", "Jaguar"]

    def test_preserves_order(self):
        assert dedupe_casefold(["b", "a", "B"]) == ["b", "a"]


class TestSplitPair:
    def test_sectioned_response(self):
        text = (
            "Butterfly:\n"
            "- larger and more colorful wings\n"
            "- clubbed antennae\n"
            "Dragonfly:\n"
            "- transparent wings held horizontally\n"
        )
        side_a, side_b = split_pair_response(text, "butterfly", "dragonfly")
        assert side_a == ["larger and more colorful wings", "clubbed antennae"]
        assert side_b == ["transparent wings held horizontally"]

    def test_bold_headers(self):
        text = (
            "**Butterfly:**\n1. colorful wings\n"
            "**Dragonfly:**\n1. long slender body\n"
        )
        side_a, side_b = split_pair_response(text, "butterfly", "dragonfly")
        assert side_a == ["colorful wings"]
        assert side_b == ["long slender body"]

    def test_mention_based_attribution(self):
        text = (
            "- Butterflies typically have larger and more colorful wings\n"
            "- Dragonflies have transparent wings held out horizontally\n"
        )
        side_a, side_b = split_pair_response(text, "butterfly", "dragonfly")
        assert side_a == ["Butterflies typically have larger and more colorful wings"]
        assert side_b == ["Dragonflies have transparent wings held out horizontally"]

    def test_unattributable_side_raises(self):
        with pytest.raises(ResponseParseError):
            split_pair_response("- something about wings\n", "butterfly", "dragonfly")

    def test_empty_raises(self):
        with pytest.raises(ResponseParseError):
            split_pair_response("", "butterfly", "dragonfly")

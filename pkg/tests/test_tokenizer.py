"""
Tests for the utterance tokenizer.
"""

from call_purpose_detector.tokenizer import (
    Token,
    TokenType,
    UtteranceLexer,
    token_count,
    tokenize,
    word_tokens,
)


class TestUtteranceLexer:
    """Test suite for UtteranceLexer and the helper functions."""

    def test_punctuation_is_split_from_words(self):
        """Test that leading and trailing punctuation become separate tokens."""
        tokens = tokenize("(hello), world!")
        assert tokens == ["(", "hello", ")", ",", "world", "!"], f"Got {tokens}"

    def test_inner_apostrophes_hyphens_and_decimals_stay(self):
        """Test that word-internal punctuation stays inside the word."""
        tokens = tokenize("I don't know, e-mail me 3.5 times!")
        expected = ["I", "don't", "know", ",", "e-mail", "me", "3.5", "times", "!"]
        assert tokens == expected, f"Got {tokens}"

    def test_token_offsets(self):
        """Test that tokens carry their character spans."""
        tokens = UtteranceLexer("Hi, there").tokenize()
        assert tokens[0] == Token(TokenType.WORD, "Hi", 0, 2)
        assert tokens[1] == Token(TokenType.PUNCTUATION, ",", 2, 3)
        assert tokens[2] == Token(TokenType.WORD, "there", 4, 9)
        assert str(tokens[0]) == "Token(WORD, 'Hi', 0:2)"

    def test_word_tokens_drop_punctuation(self):
        """Test that word_tokens keeps words only."""
        words = word_tokens("Hi, I need a refund for my order.")
        assert words == ["Hi", "I", "need", "a", "refund", "for", "my", "order"]

    def test_token_count(self):
        """Test word counting and the floor of one for punctuation-only text."""
        assert token_count("Hi, I need a refund for my order.") == 8
        assert token_count("...") == 1, "Punctuation-only text counts as one"
        assert token_count("") == 0
        assert token_count("   ") == 0

    def test_lexer_can_be_reused(self):
        """Test that tokenize resets the lexer state."""
        lexer = UtteranceLexer("one two")
        first = lexer.tokenize()
        second = lexer.tokenize()
        assert first == second, "Tokenizing twice should give the same tokens"
        assert lexer.peek() is None

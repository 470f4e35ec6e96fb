"""
Utterance tokenizer.

Tokens are maximal runs of non-whitespace characters with leading and trailing
punctuation split off one character at a time. Apostrophes and hyphens inside
a word stay with it ("don't", "e-mail"), so do decimal points ("3.5").
"""

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional


class TokenType(Enum):
    """Token types produced by the utterance lexer."""

    WORD = "WORD"
    PUNCTUATION = "PUNCTUATION"


@dataclass(frozen=True)
class Token:
    """A token with its character span in the source text."""

    type: TokenType
    value: str
    start: int
    end: int

    def __str__(self) -> str:
        return f"Token({self.type.value}, '{self.value}', {self.start}:{self.end})"


def _is_word_char(char: str) -> bool:
    return char.isalnum()


class UtteranceLexer:
    """Character scanner that splits transcript text into tokens."""

    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.tokens: List[Token] = []

    def peek(self, offset: int = 0) -> Optional[str]:
        """Peek at character at current position + offset."""
        pos = self.pos + offset
        if pos >= len(self.text):
            return None
        return self.text[pos]

    def advance(self) -> Optional[str]:
        """Move to next character and return current."""
        if self.pos >= len(self.text):
            return None
        char = self.text[self.pos]
        self.pos += 1
        return char

    def skip_whitespace(self) -> None:
        """Skip any run of whitespace."""
        char = self.peek()
        while char is not None and char.isspace():
            self.advance()
            char = self.peek()

    def read_chunk(self) -> int:
        """Consume a maximal non-whitespace run and return its start offset."""
        start = self.pos
        char = self.peek()
        while char is not None and not char.isspace():
            self.advance()
            char = self.peek()
        return start

    def _emit_chunk(self, start: int, end: int) -> None:
        """Split one chunk into leading punctuation, a word, trailing punctuation."""
        left = start
        while left < end and not _is_word_char(self.text[left]):
            self.tokens.append(
                Token(TokenType.PUNCTUATION, self.text[left], left, left + 1)
            )
            left += 1

        if left == end:
            return

        right = end
        while right > left and not _is_word_char(self.text[right - 1]):
            right -= 1

        self.tokens.append(Token(TokenType.WORD, self.text[left:right], left, right))
        for pos in range(right, end):
            self.tokens.append(
                Token(TokenType.PUNCTUATION, self.text[pos], pos, pos + 1)
            )

    def tokenize(self) -> List[Token]:
        """Tokenize the input text."""
        self.pos = 0
        self.tokens = []

        while self.pos < len(self.text):
            char = self.peek()
            if char is not None and char.isspace():
                self.skip_whitespace()
                continue
            start = self.read_chunk()
            self._emit_chunk(start, self.pos)

        return self.tokens


def tokenize(text: str) -> List[str]:
    """Return the token strings of ``text`` in order."""
    return [token.value for token in UtteranceLexer(text).tokenize()]


def word_tokens(text: str) -> List[str]:
    """Return only the word tokens of ``text``."""
    return [
        token.value
        for token in UtteranceLexer(text).tokenize()
        if token.type is TokenType.WORD
    ]


def token_count(text: str) -> int:
    """Count word tokens, flooring at 1 for text that is punctuation only.

    Punctuation-only tokens do not count towards utterance length, but any
    text with a non-whitespace character still has a length of at least one.
    """
    tokens = UtteranceLexer(text).tokenize()
    words = sum(1 for token in tokens if token.type is TokenType.WORD)
    if words == 0 and tokens:
        return 1
    return words

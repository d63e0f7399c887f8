from __future__ import annotations

import hashlib
import logging
from collections import Counter

import simplejson as json

from ccd_anticipation import files
from ccd_anticipation.errors import DataError, VersionError

logger = logging.getLogger(__name__)

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED_TOKENS = ('<pad>', '<bos>', '<eos>', '<unk>')
N_RESERVED = len(RESERVED_TOKENS)

VOCAB_SCHEMA_VERSION = 1

# Warn when more than this share of tokens falls back to UNK while encoding.
UNK_WARNING_RATE = 0.05


class Vocab(object):
    """
    Token <-> id mapping with the reserved ids PAD=0, BOS=1, EOS=2, UNK=3.

    `Args:`
        tokens: list of str
            Full id -> token list; must start with the reserved symbols
    """

    def __init__(self, tokens):

        tokens = list(tokens)
        if tuple(tokens[:N_RESERVED]) != RESERVED_TOKENS:
            raise DataError(f'Vocabulary must start with the reserved symbols {RESERVED_TOKENS}')
        if len(tokens) <= N_RESERVED:
            raise DataError('Vocabulary must hold at least one non-reserved token')
        if len(set(tokens)) != len(tokens):
            raise DataError('Vocabulary tokens must be unique')

        self.tokens = tokens
        self.index = {token: i for i, token in enumerate(tokens)}

    @classmethod
    def from_tokens(cls, content_tokens):
        """Build a vocabulary from content tokens, in the given order, after the reserved ids."""
        return cls(list(RESERVED_TOKENS) + list(content_tokens))

    def __len__(self):
        return len(self.tokens)

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.tokens == other.tokens

    def __contains__(self, token):
        return token in self.index and self.index[token] >= N_RESERVED

    def __repr__(self):
        return f'Vocab(size={len(self)}, hash={self.hash()[:12]})'

    def token_id(self, token):
        i = self.index.get(token, UNK)
        return UNK if i < N_RESERVED else i

    def encode(self, words, add_eos=True):
        """
        Map words to ids. Unknown words (and words spelled like reserved symbols) map to UNK.

        `Returns:`
            list of int
        """

        ids = [self.token_id(w) for w in words]
        if add_eos:
            ids.append(EOS)
        return ids

    def decode(self, ids, strip=True):
        """
        Map ids back to words. With ``strip`` decoding stops at EOS and PAD/BOS are dropped.

        `Returns:`
            list of str
        """

        words = []
        for i in ids:
            i = int(i)
            if strip:
                if i == EOS:
                    break
                if i in (PAD, BOS):
                    continue
            words.append(self.tokens[i] if 0 <= i < len(self.tokens) else RESERVED_TOKENS[UNK])
        return words

    def hash(self):
        """sha256 over the ordered token list; identifies the vocabulary in checkpoints."""
        return hashlib.sha256('\n'.join(self.tokens).encode('utf-8')).hexdigest()


def build_vocab(corpus):
    """
    Build the model vocabulary from the train split of a corpus. Tokens are ordered by
    descending frequency, ties broken lexicographically.

    `Args:`
        corpus: CorpusSplit
    `Returns:`
        `Vocab`
    """

    if not corpus.train:
        raise DataError('Cannot build a vocabulary from an empty train split')

    counts = Counter()
    for sample in corpus.train:
        for step in sample.steps:
            counts.update(w for w in corpus.vocab.decode(step.text) if w not in RESERVED_TOKENS)

    ordered = sorted(counts, key=lambda w: (-counts[w], w))
    vocab = Vocab.from_tokens(ordered)
    logger.info(f'Built vocabulary of {len(vocab)} tokens from {len(corpus.train)} samples')
    return vocab


def unk_rate(texts, vocab):
    """Share of words in ``texts`` (lists of words) that ``vocab`` does not know."""

    total = unknown = 0
    for words in texts:
        total += len(words)
        unknown += sum(1 for w in words if w not in vocab)
    return unknown / total if total else 0.0


def save_vocab(vocab, path):
    with files.open_text(path, 'w') as f:
        json.dump({'schema_version': VOCAB_SCHEMA_VERSION, 'tokens': vocab.tokens}, f)
        f.write('\n')
    return str(path)


def load_vocab(path):
    with files.open_text(path, 'r') as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise DataError(f'Could not parse vocabulary file {path}: {e}')

    if data.get('schema_version') != VOCAB_SCHEMA_VERSION:
        raise VersionError(f'Vocabulary schema version {data.get("schema_version")} is not '
                           f'{VOCAB_SCHEMA_VERSION}')

    return Vocab(data['tokens'])

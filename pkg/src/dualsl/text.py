"""E2E corpus ingestion, text preprocessing, frame parsing, labels and vocabulary."""
import csv
import json
import logging
import string
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from dualsl.errors import IngestionError, ParseError, ValidationError

log = logging.getLogger(__name__)

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<s>", "</s>", "<unk>")
PREPROCESS_ORDER = ("trim_punctuation", "lowercase", "lemmatize")


# -- corpus ------------------------------------------------------------------------

_MR_COLUMNS = ("mr", "meaning_representation", "meaning representation")
_REF_COLUMNS = ("ref", "human_reference", "reference", "utterance")


def load_corpus(path, split="train"):
    """Read (mr, reference) pairs from an E2E-style CSV file.

    ``split`` only labels log messages; the caller picks the file.
    """
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"corpus file not found: {path}")
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f, strict=True)
        try:
            header = next(reader, None)
            if header is None:
                return []
            mr_col, ref_col = _locate_columns(header)
            records = []
            for row in reader:
                if not row:
                    continue
                if len(row) != len(header):
                    raise IngestionError(
                        f"expected {len(header)} fields, got {len(row)}", reader.line_num)
                records.append((row[mr_col], row[ref_col]))
        except csv.Error as exc:
            raise IngestionError(f"malformed CSV: {exc}", reader.line_num) from exc
    log.info("loaded %d %s records from %s", len(records), split, path)
    return records


def _locate_columns(header):
    lowered = [h.strip().lower() for h in header]
    mr = next((i for i, h in enumerate(lowered) if h in _MR_COLUMNS), None)
    ref = next((i for i, h in enumerate(lowered) if h in _REF_COLUMNS), None)
    if mr is None or ref is None:
        raise IngestionError(f"header {header!r} lacks an MR and a reference column", 1)
    return mr, ref


# -- preprocessing -------------------------------------------------------------

_PUNCT = set(string.punctuation)
_KEEP_INSIDE = {"'", "-"}

_IRREGULAR = {
    "children": "child", "men": "man", "women": "woman", "people": "person",
    "feet": "foot", "teeth": "tooth", "mice": "mouse", "geese": "goose",
    "ran": "run", "ate": "eat", "eaten": "eat", "went": "go", "gone": "go",
    "got": "get", "gotten": "get", "came": "come", "found": "find",
    "made": "make", "sold": "sell", "told": "tell", "kept": "keep",
    "left": "leave", "brought": "bring", "bought": "buy", "thought": "think",
    "served": "serve", "rated": "rate", "located": "locate", "priced": "price",
    "named": "name", "opened": "open", "offered": "offer", "based": "base",
    "used": "use", "better": "good", "best": "good",
}
# Words whose endings look inflected but are not.
_PROTECTED = {
    "is", "was", "has", "does", "this", "his", "its", "us", "as", "yes", "its",
    "always", "perhaps", "less", "news", "thus", "plus", "bus", "gas", "series",
    "species", "during", "nothing", "something", "anything", "everything",
    "evening", "morning", "ceiling", "king", "ring", "thing", "sing", "bring",
    "spring", "string", "wing", "ping", "ding", "red", "bed", "fed", "led",
    "wed", "need", "seed", "feed", "speed", "indeed", "weed", "breed", "shed",
    "hundred", "sacred", "naked", "wicked", "kindred", "aged", "bred", "ted",
    "bring", "riverside", "centre", "chinese", "japanese", "vietnamese",
    "portuguese", "cheese", "lies", "dies", "ties", "pies", "famous",
    "delicious", "various", "previous", "serious", "generous", "gorgeous",
    "luxurious", "numerous", "spacious", "gracious", "precious", "nervous",
    "enormous", "obvious", "atmosphere", "mess", "glass", "class", "pass",
}
_SIBILANT_ENDINGS = ("ss", "sh", "ch", "x", "z")
_VOWELS = set("aeiouy")


def trim_punctuation(text):
    tokens = []
    for raw in text.split():
        tok = raw.strip(string.punctuation)
        if not tok:
            continue
        # Split on interior punctuation other than apostrophes and hyphens.
        piece = []
        for ch in tok:
            if ch in _PUNCT and ch not in _KEEP_INSIDE:
                if piece:
                    tokens.append("".join(piece))
                piece = []
            else:
                piece.append(ch)
        if piece:
            tokens.append("".join(piece))
    return [t.strip(string.punctuation) for t in tokens if t.strip(string.punctuation)]


def _lemma_step(word):
    if word in _IRREGULAR:
        return _IRREGULAR[word]
    if word in _PROTECTED or "'" in word or not word.isalpha():
        return word
    n = len(word)
    if word.endswith("ies") and n > 4:
        return word[:-3] + "y"
    if word.endswith("es") and n > 4 and word[:-2].endswith(_SIBILANT_ENDINGS):
        return word[:-2]
    if (word.endswith("s") and n > 3 and not word.endswith(("ss", "us", "is", "ous"))
            and word[-2] not in "s"):
        return word[:-1]
    if word.endswith("ing") and n > 5 and _VOWELS & set(word[:-3]):
        return _restore_stem(word[:-3])
    if word.endswith("ed") and n > 4 and _VOWELS & set(word[:-2]):
        return _restore_stem(word[:-2])
    return word


def _restore_stem(stem):
    if len(stem) > 2 and stem[-1] == stem[-2] and stem[-1] not in "lsz":
        return stem[:-1]
    if stem[-1] in "cgvz":
        return stem + "e"
    # consonant-vowel-consonant endings of short stems: nam(ed) -> name
    cvc = (len(stem) >= 3 and stem[-1] not in _VOWELS and stem[-1] not in "wxr"
           and stem[-2] in _VOWELS and stem[-3] not in _VOWELS)
    if cvc and (len(stem) <= 4 or stem.endswith("at")):
        return stem + "e"
    return stem


def lemmatize(word):
    """Rule lemmatizer applied to a fixpoint, which makes it idempotent."""
    seen = set()
    while word not in seen:
        seen.add(word)
        nxt = _lemma_step(word)
        if nxt == word or not nxt:
            return word
        word = nxt
    return word


def preprocess_utterance(raw, lemmatize_tokens=True):
    tokens = [t.lower() for t in trim_punctuation(raw)]
    if lemmatize_tokens:
        tokens = [lemmatize(t) for t in tokens]
    return tokens


# -- semantic frames -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SlotValuePair:
    """A slot-value pair; identity (equality, hashing, order) ignores value case."""

    slot: str
    key: str
    value: str

    @classmethod
    def of(cls, slot, value):
        slot, value = slot.strip(), value.strip()
        if not slot or not value:
            raise ValidationError(f"empty slot or value in {slot}[{value}]")
        return cls(slot, value.lower(), value)

    def __eq__(self, other):
        return isinstance(other, SlotValuePair) and (self.slot, self.key) == (other.slot, other.key)

    def __hash__(self):
        return hash((self.slot, self.key))

    def __lt__(self, other):
        return (self.slot, self.key) < (other.slot, other.key)

    def render(self):
        return f"{self.slot}[{self.value}]"


class SemanticFrame(frozenset):
    """Set of SlotValuePairs with at most one value per slot."""

    def __new__(cls, pairs=()):
        frame = super().__new__(cls, pairs)
        slots = [p.slot for p in frame]
        if len(slots) != len(set(slots)):
            dup = sorted(s for s, c in Counter(slots).items() if c > 1)
            raise ValidationError(f"slot(s) {dup} carry more than one value")
        return frame

    def canonical(self):
        return tuple(sorted(self))

    def key(self):
        return tuple((p.slot, p.key) for p in self.canonical())

    def render(self):
        return ", ".join(p.render() for p in self.canonical())


def parse_semantic_frame(mr):
    """Parse ``slot[value], slot[value]``; commas inside brackets belong to the value."""
    pairs = []
    depth = 0
    slot_start = 0
    value_start = None
    slot = None
    for i, ch in enumerate(mr):
        if ch == "[":
            if depth == 0:
                slot = mr[slot_start:i].strip().lstrip(",").strip()
                if not slot:
                    raise ParseError("empty slot name", i)
                value_start = i + 1
            depth += 1
        elif ch == "]":
            if depth == 0:
                raise ParseError("unbalanced ']'", i)
            depth -= 1
            if depth == 0:
                try:
                    pairs.append(SlotValuePair.of(slot, mr[value_start:i]))
                except ValidationError as exc:
                    raise ParseError(str(exc), value_start) from exc
                slot_start = i + 1
    if depth != 0:
        raise ParseError("unbalanced '['", value_start - 1)
    trailing = mr[slot_start:].strip().strip(",").strip()
    if trailing:
        raise ParseError(f"trailing text {trailing!r} without brackets", slot_start)
    return SemanticFrame(pairs)


# -- label space ---------------------------------------------------------------------

class LabelIndex:
    def __init__(self, labels):
        self.labels = list(labels)
        self.positions = {label: i for i, label in enumerate(self.labels)}
        if len(self.positions) != len(self.labels):
            raise ValidationError("duplicate labels in index")

    @property
    def size(self):
        return len(self.labels)

    def __len__(self):
        return len(self.labels)

    def __eq__(self, other):
        return isinstance(other, LabelIndex) and [
            (p.slot, p.key) for p in self.labels] == [(p.slot, p.key) for p in other.labels]

    def to_json(self):
        return [[p.slot, p.value] for p in self.labels]

    @classmethod
    def from_json(cls, items):
        return cls([SlotValuePair.of(s, v) for s, v in items])


def build_label_index(frames):
    frames = list(frames)
    if not frames:
        raise ValidationError("cannot build a label index from zero frames")
    # Representative casing for a pair is the lexicographically smallest surface.
    reps = {}
    for frame in frames:
        for pair in frame:
            if pair not in reps or pair.value < reps[pair].value:
                reps[pair] = pair
    return LabelIndex(sorted(reps.values()))


def frame_to_label_vector(frame, index, unseen="drop"):
    vec = np.zeros(index.size)
    for pair in frame:
        pos = index.positions.get(pair)
        if pos is None:
            if unseen == "error":
                raise ValidationError(f"pair {pair.render()} is not in the label index")
            log.warning("dropping unseen slot-value pair %s", pair.render())
            continue
        vec[pos] = 1.0
    return vec


def vector_to_frame(vector, index):
    return SemanticFrame(index.labels[i] for i in np.flatnonzero(np.asarray(vector) > 0.5))


# -- vocabulary ----------------------------------------------------------------------

class Vocabulary:
    def __init__(self, tokens):
        self.id_to_token = list(RESERVED) + list(tokens)
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}

    def __len__(self):
        return len(self.id_to_token)

    def lookup(self, token):
        return self.token_to_id.get(token, UNK)

    def to_json(self):
        return self.id_to_token[len(RESERVED):]

    @classmethod
    def from_json(cls, tokens):
        return cls(tokens)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.id_to_token == other.id_to_token


def build_vocabulary(utterances, min_count=1):
    counts = Counter(tok for utt in utterances for tok in utt)
    kept = [t for t, c in counts.items() if c >= min_count and t not in RESERVED]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocabulary(kept)


@dataclass(frozen=True)
class Utterance:
    tokens: tuple
    surface: str = ""

    def __post_init__(self):
        if len(self.tokens) < 2 or self.tokens[0] != BOS or self.tokens[-1] != EOS:
            raise ValidationError("utterance must start with BOS and end with EOS")

    def __len__(self):
        return len(self.tokens)


def encode_utterance(tokens, vocab, surface=""):
    return Utterance(tuple([BOS] + [vocab.lookup(t) for t in tokens] + [EOS]), surface)


def decode_utterance(ids, vocab):
    """Token strings between the sentinels (stops at the first EOS)."""
    ids = [int(i) for i in ids]
    out = []
    for i in ids[1 if ids and ids[0] == BOS else 0:]:
        if i == EOS:
            break
        out.append(vocab.id_to_token[i])
    return out


def group_multi_references(records):
    """Group reference strings by the canonical key of their frame."""
    groups = {}
    for frame, surface in records:
        groups.setdefault(frame.key(), []).append(surface)
    return groups


# -- dumps ---------------------------------------------------------------------------

def dump_jsonl(path, frames, token_lists, index):
    with open(path, "w", encoding="utf-8") as f:
        for frame, tokens in zip(frames, token_lists):
            labels = sorted(index.positions[p] for p in frame if p in index.positions)
            f.write(json.dumps({"mr": frame.render(), "labels": labels, "tokens": list(tokens)})
                    + "\n")

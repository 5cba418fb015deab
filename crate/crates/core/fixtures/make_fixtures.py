"""Regenerates the synthetic fixtures in this directory.

toy/: a two-class OLID-format corpus whose classes are separable by
vocabulary, with chain-shaped CoNLL-U parses keyed by tweet id.
tweets_1k.txt: 1,000 noisy tweet-like lines for preprocessing tests.
"""

import random
from pathlib import Path

HERE = Path(__file__).resolve().parent

OFF_WORDS = ["stupid", "idiot", "trash", "pathetic", "disgusting", "loser", "moron", "clown"]
NOT_WORDS = ["lovely", "great", "thanks", "wonderful", "happy", "kind", "friend", "beautiful"]
FILLER = ["you", "are", "the", "a", "this", "that", "is", "so", "really", "today", "what", "people"]


def tweet(rng, words):
    toks = [rng.choice(FILLER) for _ in range(rng.randint(2, 6))]
    for _ in range(rng.randint(1, 2)):
        toks.insert(rng.randint(0, len(toks)), rng.choice(words))
    return toks


def conllu(sent_id, toks):
    lines = [f"# sent_id = {sent_id}", f"# text = {' '.join(toks)}"]
    for i, t in enumerate(toks, start=1):
        head = i - 1
        rel = "root" if head == 0 else "dep"
        lines.append(f"{i}\t{t}\t{t}\t_\t_\t_\t{head}\t{rel}\t_\t_")
    return "\n".join(lines) + "\n\n"


def toy():
    rng = random.Random(7)
    out = HERE / "toy"
    train_rows, parses = [], []
    for i in range(200):
        off = i % 2 == 1
        toks = tweet(rng, OFF_WORDS if off else NOT_WORDS)
        sid = str(10000 + i)
        train_rows.append(f"{sid}\t{' '.join(toks)}\t{'OFF' if off else 'NOT'}\tNULL\tNULL")
        parses.append(conllu(sid, toks))
    test_rows, gold = [], []
    for i in range(40):
        off = i % 3 == 0
        toks = tweet(rng, OFF_WORDS if off else NOT_WORDS)
        sid = str(20000 + i)
        test_rows.append(f"{sid}\t{' '.join(toks)}")
        gold.append(f"{sid},{'OFF' if off else 'NOT'}")
        parses.append(conllu(sid, toks))
    (out / "train.tsv").write_text("id\ttweet\tsubtask_a\tsubtask_b\tsubtask_c\n" + "\n".join(train_rows) + "\n")
    (out / "test.tsv").write_text("id\ttweet\n" + "\n".join(test_rows) + "\n")
    (out / "test_labels.csv").write_text("\n".join(gold) + "\n")
    (out / "parses.conllu").write_text("".join(parses))


USERS = ["@india", "@USER", "@jane_doe", "@bob99", "@news"]
URLS = ["https://t.co/xYz12", "http://example.com/a?b=1", "www.site.org/page", "HTTPS://T.CO/ABC"]
TAGS = ["#banislam", "#MAGA", "#lovewins", "#ThrowbackThursday", "#fail", "#happybirthday", "#a"]
EMOJI = [":)", ":(", ":D", ";)", "<3", "\U0001F602", "\U0001F621", "❤️", "\U0001F44D", ":-)"]
WORDS = ["this", "is", "so", "good", "bad", "what", "the", "hell", "love", "hate", "people", "today",
         "Waaaaayyyy", "sooooo", "coooool", "noooo", "yesss", "Hello", "WORLD", "lol", "cannot", "believe",
         "goodmorning", "itsover", "crazy", "night", "OMG", "really", "stop", "it", "2day", "ok"]


def tweets_1k():
    rng = random.Random(11)
    lines = []
    for _ in range(1000):
        toks = [rng.choice(WORDS) for _ in range(rng.randint(3, 12))]
        for pool, prob in [(USERS, 0.5), (URLS, 0.3), (TAGS, 0.5), (EMOJI, 0.5)]:
            while rng.random() < prob:
                toks.insert(rng.randint(0, len(toks)), rng.choice(pool))
                prob /= 2
        sep = rng.choice([" ", " ", " ", "  ", "\t"])
        lines.append(sep.join(toks))
    (HERE / "tweets_1k.txt").write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    toy()
    tweets_1k()

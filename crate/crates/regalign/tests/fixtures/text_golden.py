"""Regenerates text_golden.jsonl from first principles (stdlib only).

python3 text_golden.py > text_golden.jsonl
"""
import json
import math
from collections import Counter


def is_cjk(c):
    o = ord(c)
    return (0x3040 <= o <= 0x30FF or 0x3400 <= o <= 0x4DBF or 0x4E00 <= o <= 0x9FFF
            or 0xAC00 <= o <= 0xD7AF or 0xF900 <= o <= 0xFAFF
            or 0x20000 <= o <= 0x2EBEF or 0x30000 <= o <= 0x3134F)


def tokenize(text, lang):
    out, cur = [], ""
    for c in text:
        if lang != "en" and is_cjk(c):
            if cur:
                out.append(cur)
                cur = ""
            out.append(c)
        elif c.isalnum():
            cur += c.lower()
        elif cur:
            out.append(cur)
            cur = ""
    if cur:
        out.append(cur)
    return out


def ngrams(toks, n):
    return Counter(tuple(toks[i:i + n]) for i in range(len(toks) - n + 1))


def bleu(c, r, max_n):
    if not c:
        return 0.0
    logs = 0.0
    for n in range(1, max_n + 1):
        cc, rc = ngrams(c, n), ngrams(r, n)
        m = sum(min(v, rc[g]) for g, v in cc.items())
        total = max(len(c) - n + 1, 0)
        if n == 1:
            if m == 0:
                return 0.0
            p = m / total
        else:
            p = (m + 1) / (total + 1)
        logs += math.log(p)
    bp = math.exp(1 - len(r) / len(c)) if len(c) < len(r) else 1.0
    return 100 * bp * math.exp(logs / max_n)


def lcs(a, b):
    t = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a)):
        for j in range(len(b)):
            t[i + 1][j + 1] = t[i][j] + 1 if a[i] == b[j] else max(t[i][j + 1], t[i + 1][j])
    return t[-1][-1]


def rouge_l(c, r):
    if not c or not r:
        return 0.0
    k = lcs(c, r)
    if k == 0:
        return 0.0
    p, q = k / len(c), k / len(r)
    return 100 * 2 * p * q / (p + q)


def meteor(c, r, alpha=0.9, beta=3.0, gamma=0.5):
    if not c or not r:
        return 0.0
    used = set()
    align = []
    for i, tok in enumerate(c):
        j = None
        if align and align[-1][0] == i - 1:
            k = align[-1][1] + 1
            if k < len(r) and k not in used and r[k] == tok:
                j = k
        if j is None:
            j = next((k for k in range(len(r)) if k not in used and r[k] == tok), None)
        if j is not None:
            used.add(j)
            align.append((i, j))
    m = len(align)
    if m == 0:
        return 0.0
    chunks = 1 + sum(1 for a, b in zip(align, align[1:]) if not (b[0] == a[0] + 1 and b[1] == a[1] + 1))
    p, q = m / len(c), m / len(r)
    f = p * q / (alpha * p + (1 - alpha) * q)
    return 100 * f * (1 - gamma * (chunks / m) ** beta)


PAIRS = [
    ("the cat sat", "the cat sat down", "en"),
    ("the cat", "the cat sat", "en"),
    ("a b c", "a b c", "en"),
    ("a b", "b a", "en"),
    ("red blue", "green yellow", "en"),
    ("The heart size is normal.", "Heart size is within normal limits.", "en"),
    ("No pleural effusion or pneumothorax.", "There is no pleural effusion.", "en"),
    ("the the the the", "the cat", "en"),
    ("mild cardiomegaly with left lower lobe opacity", "left lower lobe opacity with mild cardiomegaly", "en"),
    ("双肺纹理清晰，心影不大。", "双肺纹理增多，心影不大。", "zh"),
]

for cand, ref, lang in PAIRS:
    c, r = tokenize(cand, lang), tokenize(ref, lang)
    print(json.dumps({
        "candidate": cand, "reference": ref, "language": lang,
        "bleu1": bleu(c, r, 1), "bleu4": bleu(c, r, 4),
        "rouge_l": rouge_l(c, r), "meteor": meteor(c, r),
    }, ensure_ascii=False))

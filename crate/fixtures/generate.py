"""Regenerates the bundled fixture corpus. Deterministic under the fixed seed."""

import json
import random
from pathlib import Path

SEED = 20240917
OUT = Path(__file__).parent

LLM_OPEN = ["首先，", "总的来说，", "值得注意的是，", "综上所述，", "此外，", "从多个角度来看，", "在当今社会，"]
LLM_BODY = [
    "这一现象体现了社会发展的多样性与复杂性",
    "我们需要从多个维度进行深入分析",
    "相关部门应当进一步完善相应的制度建设",
    "这不仅有助于提升整体效率也能够促进可持续发展",
    "科技的进步为人们的生活带来了诸多便利",
    "教育资源的合理配置对于社会公平具有重要意义",
    "企业应当积极履行社会责任并推动行业健康发展",
    "通过加强合作与交流可以实现互利共赢",
    "这一举措对于提升公众意识具有积极作用",
    "在此过程中需要充分考虑各方的利益诉求",
]
LLM_CLOSE = ["。总之，这一问题值得我们持续关注。", "。因此，我们应当以更加开放的态度面对未来。", "。"]

HUMAN_BODY = [
    "昨天去楼下那家面馆吃了碗牛肉面，味道还行，就是有点咸",
    "我妈又在群里转发养生文章了，真是拿她没办法",
    "今天地铁挤得要命，差点没上去",
    "说实话，这部电影前半段挺无聊的，后面才好看起来",
    "周末和朋友去爬山，累死了，腿到现在还疼",
    "隔壁装修，电钻从早上八点响到现在",
    "老板突然说要加班，计划全泡汤了",
    "猫今天把花盆打翻了，满地都是土",
    "刚下班，外面下大雨，伞还忘在公司了",
    "这家奶茶店排队排了半小时，喝起来也就那样",
]
HUMAN_TAIL = ["哈哈哈", "唉", "！！", "。。。", "？？", "～", "吧", "啊"]


def llm_text(rng, target):
    parts = []
    while sum(len(p) for p in parts) < target:
        sent = rng.choice(LLM_OPEN) + rng.choice(LLM_BODY) + rng.choice(LLM_CLOSE)
        parts.append(sent)
        if rng.random() < 0.3:
            parts.append("\n\n")
    return "".join(parts).strip()


def human_text(rng, target):
    parts = []
    while sum(len(p) for p in parts) < target:
        sent = rng.choice(HUMAN_BODY)
        tail = rng.choice(HUMAN_TAIL)
        parts.append(sent + ("，" if rng.random() < 0.5 else "") + tail + ("。" if tail in "吧啊唉" else ""))
    return "".join(parts)


def sample(rng, idx, label, prefix, subset=None):
    # Lengths spread over all four length buckets.
    target = rng.choice([40, 60, 100, 130, 200, 260, 400, 520])
    text = llm_text(rng, target) if label == 1 else human_text(rng, target)
    # A fifth of each class borrows the other style: the rule detectors alone cannot be perfect.
    if rng.random() < 0.2:
        text = human_text(rng, target) if label == 1 else llm_text(rng, target)
    rec = {"id": f"{prefix}{idx:04d}", "text": text, "label": label}
    if subset:
        rec["subset"] = subset
    return rec


def score(rng, label, length, informative_above):
    # Continuous detector that is sharp on one side of a length cut and noisy on the other.
    sharp = length >= informative_above
    mu = (1.5 if label == 1 else -1.5) if sharp else (0.3 if label == 1 else -0.3)
    return round(rng.gauss(mu, 1.0), 6)


def main():
    rng = random.Random(SEED)
    train = [sample(rng, i, i % 2, "tr") for i in range(240)]
    subsets = ["normal", "normal", "len-64", "paraphrase"]
    test = [sample(rng, i, (i + 1) % 2, "te", subsets[(i // 2) % 4]) for i in range(120)]

    rows = []
    for rec in train + test:
        n = len(rec["text"])
        fast = score(rng, rec["label"], n, 150)
        # lower means LLM for the second detector, sharp on short texts
        bino = -score(rng, rec["label"], 400 - min(n, 400), 250)
        rows.append((rec["id"], fast, bino, rec["label"]))

    def dump(name, records):
        with open(OUT / name, "w", encoding="utf-8") as f:
            for r in records:
                f.write(json.dumps(r, ensure_ascii=False) + "\n")

    dump("train.jsonl", train)
    dump("test.jsonl", test)
    dump("scores_fast_detect.jsonl", [{"id": i, "score": f} for i, f, _, _ in rows])
    dump("scores_binoculars.jsonl", [{"id": i, "score": b} for i, _, b, _ in rows])
    # Support signal: right 85% of the time, with varying confidence.
    support = []
    for i, _, _, label in rows:
        sign = 1 if label == 1 else -1
        if rng.random() < 0.15:
            sign = -sign
        support.append({"id": i, "value": round(sign * rng.uniform(0.4, 1.0), 3)})
    dump("support_stub.jsonl", support)
    dump("demonstrations.jsonl", [
        {"text": llm_text(rng, 80), "label": 1},
        {"text": human_text(rng, 80), "label": 0},
        {"text": llm_text(rng, 60), "label": 1},
        {"text": human_text(rng, 60), "label": 0},
        {"text": llm_text(rng, 100), "label": 1},
    ])
    mt = []
    for rec in test[:8]:
        pivot = f"[en] {rec['id']}"
        mt.append({"in": rec["text"], "out": pivot})
        mt.append({"in": pivot, "out": rec["text"].replace("，", "、")})
    dump("mt_stub.jsonl", mt)


if __name__ == "__main__":
    main()

"""Builds the CV fixture corpus, its embedding table, the threshold pair set,
and the expected outputs computed by an independent reference resolver.

Run from this directory: python3 generate.py
"""

import json
import math
from pathlib import Path

import numpy as np

DIM = 64
THRESHOLD = 0.7
HERE = Path(__file__).parent
CORPUS = HERE / "corpus"
PAIRS = HERE / "pairs"


def canon(text):
    return " ".join(text.casefold().split())


def normalize(v):
    # same order of operations as the Rust loader
    norm = math.sqrt(sum(float(c) * float(c) for c in v))
    return [float(c) / norm for c in v]


def dot(u, v):
    total = 0.0
    for a, b in zip(u, v):
        total += a * b
    return max(-1.0, min(1.0, total))


class Space:
    def __init__(self, seed):
        self.rng = np.random.default_rng(seed)
        self.table = {}

    def random(self, text):
        v = self.rng.standard_normal(DIM)
        self.table[text] = list(v / np.linalg.norm(v))

    def near(self, text, base, cos):
        v = np.array(self.table[base])
        u = self.rng.standard_normal(DIM)
        u -= u.dot(v) * v
        u /= np.linalg.norm(u)
        w = cos * v + math.sqrt(1.0 - cos * cos) * u
        self.table[text] = list(w / np.linalg.norm(w))


BLUEPRINT = {
    "name": "cv",
    "keys": {
        "name": {"kind": "text", "description": "full name of the candidate", "required": True, "concept": True},
        "job_title": {"kind": "text", "description": "current job title", "concept": True},
        "skills": {"kind": "text-list", "description": "technical skills"},
        "experience": {"kind": "text-list", "description": "one line per position held"},
        "education": {"kind": "text-list", "description": "one line per degree"},
    },
}

# id -> (text, distilled sections, entities, local triples, extra global triples)
CVS = {
    "cv_01": (
        "Alice Martin\nData Scientist\n\nAlice works at Google on ranking models. She studied "
        "at the University of Lyon. Skills: Python, Machine Learning, Java. She also uses Excel "
        "for reporting.\n",
        {
            "name": "Alice Martin",
            "job_title": "Data Scientist",
            "skills": ["Python", "Machine Learning", "Java"],
            "experience": ["Data Scientist at Google"],
            "education": ["MSc Statistics, University of Lyon"],
        },
        [("Alice Martin", "Person"), ("Google", "Organization"), ("University of Lyon", "Organization"),
         ("Python", "Skill"), ("Machine Learning", "Skill"), ("Java", "Skill")],
        [("Alice Martin", "works at", "Google"), ("Alice Martin", "studied at", "University of Lyon"),
         ("Alice Martin", "has skill", "Python"), ("Alice Martin", "has skill", "Machine Learning"),
         ("Alice Martin", "has skill", "Java"), ("Alice Martin", "uses", "Excel")],
        [],
    ),
    "cv_02": (
        "Bob Chen\nSoftware Engineer\n\nBob is employed at Google LLC. He graduated from ETH "
        "Zurich. Skills: python programming, JavaScript, Kubernetes (K8s).\n",
        {
            "name": "Bob Chen",
            "job_title": "Software Engineer",
            "skills": ["python programming", "JavaScript", "Kubernetes", "K8s"],
            "experience": ["Software Engineer at Google LLC"],
            "education": ["BSc Computer Science, ETH Zurich"],
        },
        [("Bob Chen", "Person"), ("Google LLC", "Organization"), ("ETH Zurich", "Organization"),
         ("python programming", "Skill"), ("JavaScript", "Skill"), ("Kubernetes", "Skill"),
         ("K8s", "Skill")],
        [("Bob Chen", "employed at", "Google LLC"), ("Bob Chen", "studied at", "ETH Zurich"),
         ("Bob Chen", "has skill", "python programming"), ("Bob Chen", "has skill", "JavaScript"),
         ("Bob Chen", "has skill", "K8s")],
        [],
    ),
    "cv_03": (
        "Chloé Dubois\nData Scientist\n\nChloé works at Amazon. She holds a PhD from the "
        "Université de Lyon. Skills: ML, Python.\n",
        {
            "name": "Chloé Dubois",
            "job_title": "Data Scientist",
            "skills": ["ML", "Python"],
            "experience": ["Data Scientist at Amazon"],
            "education": ["PhD Computer Science, Université de Lyon"],
        },
        [("Chloé Dubois", "Person"), ("Amazon", "Organization"), ("Université de Lyon", "Organization"),
         ("ML", "Skill"), ("Python", "Skill")],
        [("Chloé Dubois", "studied at", "Université de Lyon"), ("Chloé Dubois", "works at", "Amazon"),
         ("Chloé Dubois", "has skill", "ML"), ("Chloé Dubois", "has skill", "Python")],
        [("Alice Martin", "studied with", "Chloé Dubois")],
    ),
    "cv_04": (
        "David Müller\nCloud Architect\n\nDavid works at Amazon Web Services and is AWS "
        "certified. He studied at ETH Zürich. Skills: Kubernetes, Java.\n",
        {
            "name": "David Müller",
            "job_title": "Cloud Architect",
            "skills": ["Kubernetes", "Java"],
            "experience": ["Cloud Architect at Amazon Web Services"],
            "education": ["MSc Computer Science, ETH Zürich"],
        },
        [("David Müller", "Person"), ("Amazon Web Services", "Organization"), ("ETH Zürich", "Organization"),
         ("Kubernetes", "Skill"), ("Java", "Skill")],
        [("David Müller", "works at", "Amazon Web Services"), ("David Müller", "studied at", "ETH Zürich"),
         ("David Müller", "has skill", "Kubernetes"), ("David Müller", "certified in", "AWS")],
        [("Amazon Web Services", "part of", "Amazon")],
    ),
    "cv_05": (
        "Emma Rossi\nSoftware Engineer\n\nEmma works at Google, where she is employed as a "
        "backend engineer. Skills: Python, Machine Learning.\n",
        {
            "name": "Emma Rossi",
            "job_title": "Software Engineer",
            "skills": ["Python", "Machine Learning"],
            "experience": ["Software Engineer at Google"],
        },
        [("Emma Rossi", "Person"), ("Google", "Organization"), ("Python", "Skill"),
         ("Machine Learning", "Skill")],
        [("Emma Rossi", "works at", "Google"), ("Emma Rossi", "employed at", "Google"),
         ("Emma Rossi", "has skill", "Python")],
        [("Emma Rossi", "colleague of", "Alice Martin")],
    ),
}

NEAR = [
    ("python programming", "Python", 0.90),
    ("ML", "Machine Learning", 0.86),
    ("Google LLC", "Google", 0.92),
    ("Université de Lyon", "University of Lyon", 0.90),
    ("ETH Zürich", "ETH Zurich", 0.95),
    ("K8s", "Kubernetes", 0.88),
    ("JavaScript", "Java", 0.55),
    ("Amazon Web Services", "Amazon", 0.60),
    ("AWS", "Amazon Web Services", 0.90),
    ("employed at", "works at", 0.88),
]

# canonical surface form -> concept, for resolution FDR
ENTITY_LABELS = {
    "Python": "python", "python programming": "python",
    "Machine Learning": "machine learning", "ML": "machine learning",
    "Google": "google", "Google LLC": "google",
    "University of Lyon": "university of lyon", "Université de Lyon": "university of lyon",
    "ETH Zurich": "eth zurich", "ETH Zürich": "eth zurich",
    "Kubernetes": "kubernetes", "K8s": "kubernetes",
    "Java": "java", "JavaScript": "javascript",
    "Amazon": "amazon", "Amazon Web Services": "aws", "AWS": "aws",
}
PREDICATE_LABELS = {"works at": "works at", "employed at": "works at"}


def concept_predicate(key):
    return "HAS_" + "".join(c if c.isalnum() else "_" for c in key.upper())


def build_space():
    space = Space(20240601)
    texts = []
    for doc_id, (_, sections, entities, local, extra) in CVS.items():
        texts.append(doc_id)
        texts.extend(sections[k] for k in ("name", "job_title"))
        texts.extend(name for name, _ in entities)
        for s, p, o in local + extra:
            texts.extend([s, p, o])
    texts.extend(concept_predicate(k) for k in ("name", "job_title"))
    derived = {t for t, _, _ in NEAR}
    seen = set()
    for t in texts:
        if canon(t) in seen or t in derived:
            continue
        seen.add(canon(t))
        space.random(t)
    for text, base, cos in NEAR:
        space.near(text, base, cos)
    return {t: v for t, v in space.table.items()}


class Reference:
    """Straightforward restatement of the resolution rules over plain lists."""

    def __init__(self, table, threshold, strict_first_block=True, policy="match_then_drop"):
        self.vec = {canon(t): normalize(v) for t, v in table.items()}
        self.threshold = threshold
        self.strict = strict_first_block
        self.policy = policy
        self.entities = []  # dicts: name, key, aliases, vec, prov
        self.relations = []  # dicts: s, p, pk, o, aliases, vec, prov
        self.entity_log = []
        self.relation_log = []

    def find_entity(self, key):
        for i, e in enumerate(self.entities):
            if e["key"] == key or key in e["aliases"]:
                return i
        return None

    def best(self, items, v):
        best = None
        for i, item in items:
            c = dot(v, item["vec"])
            if best is None or c > best[1]:
                best = (i, c)
        return best

    def add_alias(self, entity, key):
        if self.find_entity(key) is None:
            entity["aliases"].add(key)

    def match_block(self, doc, local):
        seed = not self.strict and not self.entities
        matched = []
        for name, label in local:
            key = canon(name)
            v = self.vec[key]
            if seed:
                i = self.find_entity(key)
                if i is None:
                    self.entities.append({"name": name, "key": key, "label": label, "aliases": set(), "vec": v, "prov": {doc}})
                    i = len(self.entities) - 1
                    self.entity_log.append((doc, name, "inserted", key, None))
                else:
                    self.entities[i]["prov"].add(doc)
                    self.entity_log.append((doc, name, "exact", self.entities[i]["key"], None))
                matched.append(self.entities[i]["key"])
                continue
            i = self.find_entity(key)
            if i is not None:
                self.entities[i]["prov"].add(doc)
                self.entity_log.append((doc, name, "exact", self.entities[i]["key"], None))
                matched.append(self.entities[i]["key"])
                continue
            best = self.best(enumerate(self.entities), v)
            if best is not None and best[1] >= self.threshold:
                target = self.entities[best[0]]
                target["prov"].add(doc)
                self.add_alias(target, key)
                self.entity_log.append((doc, name, "merged", target["key"], best[1]))
            else:
                target = {"name": name, "key": key, "label": label, "aliases": set(), "vec": v, "prov": {doc}}
                self.entities.append(target)
                self.entity_log.append((doc, name, "inserted", key, best[1] if best else None))
            matched.append(target["key"])
        return matched

    def endpoint(self, name, doc):
        key = canon(name)
        i = self.find_entity(key)
        if i is not None:
            return ("exact", self.entities[i]["key"])
        if self.policy == "drop":
            return ("unresolved", None)
        best = self.best(enumerate(self.entities), self.vec[key])
        if best is not None and best[1] >= self.threshold:
            return ("matched", self.entities[best[0]]["key"])
        if self.policy == "match_then_drop":
            return ("unresolved", None)
        self.entities.append({"name": name, "key": key, "label": None, "aliases": set(), "vec": self.vec[key], "prov": {doc}})
        return ("inserted", key)

    def resolve(self, doc, triples):
        for s, p, o in triples:
            (sr, sk), (orr, ok) = self.endpoint(s, doc), self.endpoint(o, doc)
            if sk is None or ok is None:
                self.relation_log.append((doc, s, p, o, sr, orr, "dropped", None))
                continue
            pk = canon(p)
            hit = next((r for r in self.relations
                        if r["s"] == sk and r["o"] == ok and (r["pk"] == pk or pk in r["aliases"])), None)
            if hit is not None:
                hit["prov"].add(doc)
                self.relation_log.append((doc, s, p, o, sr, orr, "exact", (sk, hit["pk"], ok)))
                continue
            v = self.vec[pk]
            best = self.best([(i, r) for i, r in enumerate(self.relations) if r["s"] == sk and r["o"] == ok], v)
            if best is not None and best[1] >= self.threshold:
                r = self.relations[best[0]]
                r["prov"].add(doc)
                r["aliases"].add(pk)
                self.relation_log.append((doc, s, p, o, sr, orr, "merged", (sk, r["pk"], ok)))
            else:
                self.relations.append({"s": sk, "p": p, "pk": pk, "o": ok, "aliases": set(), "vec": v, "prov": {doc}})
                self.relation_log.append((doc, s, p, o, sr, orr, "inserted", (sk, pk, ok)))

    def local_entities(self, doc_id):
        _, sections, entities, _, _ = CVS[doc_id]
        local = list(entities)
        local.append((doc_id, "Document"))
        local += [(sections[k], k) for k in ("name", "job_title")]
        unique, seen = [], set()
        for name, label in local:
            if canon(name) not in seen:
                seen.add(canon(name))
                unique.append((name, label))
        return unique

    def run(self, doc_ids, mode):
        blocks = []
        for d in doc_ids:
            blocks.append((d, self.match_block(d, self.local_entities(d))))
        for d, _ in blocks:
            _, sections, _, local, extra = CVS[d]
            seeds = [(d, concept_predicate(k), sections[k]) for k in ("name", "job_title")]
            triples = local + (extra if mode == "global" else [])
            self.resolve(d, seeds + triples)


def expected(table, mode, doc_ids=tuple(CVS)):
    ref = Reference(table, THRESHOLD)
    ref.run(list(doc_ids), mode)
    return {
        "entities": [e["key"] for e in ref.entities],
        "relations": [[r["s"], r["pk"], r["o"]] for r in ref.relations],
        "entity_decisions": [
            {"document_id": d, "local_name": n, "outcome": out, "target_key": k, "similarity": s}
            for d, n, out, k, s in ref.entity_log
        ],
        "relation_outcomes": [
            {"document_id": d, "subject": s, "predicate": p, "object": o,
             "subject_resolution": sr, "object_resolution": orr, "outcome": out,
             "target": list(t) if t else None}
            for d, s, p, o, sr, orr, out, t in ref.relation_log
        ],
    }


def fixtures():
    out = {}
    for doc_id, (_, sections, entities, local, extra) in CVS.items():
        rel = lambda ts: [{"subject": s, "predicate": p, "object": o} for s, p, o in ts]
        out[doc_id] = {
            "distill": sections,
            "entities": [{"name": n, "label": l} for n, l in entities],
            "relations": rel(local),
            "relations_global": rel(local + extra),
        }
    return out


def dump(path, value):
    path.write_text(json.dumps(value, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def pair_set():
    rng = np.random.default_rng(7)
    space = Space(11)
    pairs = []
    for i in range(40):
        a, b = f"entity {i} alpha", f"entity {i} beta"
        target = float(np.clip(rng.normal(0.6, 0.12), 0.05, 0.99))
        space.random(a)
        space.near(b, a, target)
        pairs.append((a, b))
    table = {t: v for t, v in space.table.items()}
    vec = {canon(t): normalize(v) for t, v in table.items()}
    cosines = [dot(vec[canon(a)], vec[canon(b)]) for a, b in pairs]
    n = len(cosines)
    mean = math.fsum(cosines) / n
    std = math.sqrt(math.fsum((c - mean) ** 2 for c in cosines) / n)
    return pairs, table, {"kind": "entities", "pairs": n, "mean": mean, "std": std}


def main():
    table = build_space()
    for doc_id, (text, *_rest) in CVS.items():
        (CORPUS / "docs" / f"{doc_id}.txt").write_text(text, encoding="utf-8")
    dump(CORPUS / "blueprint.json", BLUEPRINT)
    dump(CORPUS / "llm_fixtures.json", fixtures())
    dump(CORPUS / "embeddings.json", table)
    dump(CORPUS / "expected_local.json", expected(table, "local"))
    dump(CORPUS / "expected_global.json", expected(table, "global"))
    dump(CORPUS / "metrics.json", {
        "labels": {"entities": ENTITY_LABELS, "predicates": PREDICATE_LABELS},
        "schema_annotations": {
            d: {k: {"correct": len(v) if isinstance(v, list) else 1, "incorrect": 0,
                    "total": len(v) if isinstance(v, list) else 1}
                for k, v in CVS[d][1].items()}
            for d in CVS
        },
        "information_consistency": {"cv_01": 0.95, "cv_02": 0.92, "cv_03": 0.9, "cv_04": 0.85, "cv_05": 0.97},
        "triplets": {"relevant": 21, "total": 22},
    })
    dump(CORPUS / "config.json", {
        "blueprint": "blueprint.json",
        "backend": {"kind": "mock-lookup", "fixtures": "llm_fixtures.json", "lookup_table": "embeddings.json"},
        "matcher": {"threshold": THRESHOLD},
        "relation_mode": "local",
        "endpoint_policy": "match_then_drop",
        "output_dir": "out",
    })

    pairs, pair_table, stats = pair_set()
    with open(PAIRS / "entities.jsonl", "w", encoding="utf-8") as f:
        f.write(json.dumps({"kind": "entities"}) + "\n")
        for a, b in pairs:
            f.write(json.dumps({"a": a, "b": b}) + "\n")
    dump(PAIRS / "embeddings.json", pair_table)
    dump(PAIRS / "expected.json", stats)


if __name__ == "__main__":
    main()

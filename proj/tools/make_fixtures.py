#!/usr/bin/env python3
"""Regenerates the offline fixture bundle under data/.

The corpus is produced by a small stochastic grammar so the bundle is
license-free and reproducible. Words are drawn from synonym groups; the same
groups become the substitution lexicon.

    python3 tools/make_fixtures.py [--out data]
"""

import argparse
import json
import os
import random

NOUNS = [
    ["car", "automobile", "vehicle"], ["house", "home", "dwelling"],
    ["child", "kid", "youngster"], ["city", "town", "municipality"],
    ["road", "street", "avenue"], ["doctor", "physician", "medic"],
    ["teacher", "instructor", "tutor"], ["student", "pupil", "learner"],
    ["book", "volume", "tome"], ["idea", "notion", "concept"],
    ["problem", "issue", "difficulty"], ["answer", "reply", "response"],
    ["job", "occupation", "profession"], ["friend", "companion", "comrade"],
    ["dog", "hound", "canine"], ["cat", "feline", "kitty"],
    ["river", "stream", "creek"], ["forest", "woods", "woodland"],
    ["hill", "mound", "knoll"], ["storm", "tempest", "gale"],
    ["money", "cash", "funds"], ["shop", "store", "boutique"],
    ["meal", "dinner", "feast"], ["trip", "journey", "voyage"],
    ["gift", "present", "offering"], ["story", "tale", "narrative"],
    ["picture", "image", "photo"], ["worker", "laborer", "employee"],
    ["leader", "chief", "head"], ["company", "firm", "business"],
    ["report", "account", "summary"], ["plan", "scheme", "strategy"],
    ["goal", "aim", "objective"], ["result", "outcome", "consequence"],
    ["method", "technique", "approach"], ["error", "mistake", "blunder"],
    ["rule", "regulation", "law"], ["team", "group", "crew"],
    ["village", "hamlet", "settlement"], ["ship", "boat", "vessel"],
    ["garden", "yard", "orchard"], ["letter", "note", "message"],
    ["machine", "device", "apparatus"], ["road map", "chart", "atlas"],
    ["stone", "rock", "pebble"], ["path", "trail", "track"],
    ["door", "gate", "entrance"], ["window", "pane", "skylight"],
    ["room", "chamber", "hall"], ["table", "desk", "counter"],
    ["chair", "seat", "stool"], ["coat", "jacket", "cloak"],
    ["hat", "cap", "bonnet"], ["bag", "sack", "pouch"],
    ["box", "crate", "chest"], ["field", "meadow", "pasture"],
    ["sea", "ocean", "deep"], ["song", "tune", "melody"],
    ["game", "match", "contest"], ["market", "bazaar", "fair"],
    ["king", "monarch", "ruler"], ["soldier", "warrior", "fighter"],
    ["farmer", "grower", "rancher"], ["painter", "artist", "illustrator"],
    ["singer", "vocalist", "crooner"], ["lawyer", "attorney", "counsel"],
    ["nurse", "caregiver", "attendant"], ["baker", "confectioner", "pastry cook"],
    ["engine", "motor", "turbine"], ["bridge", "span", "viaduct"],
    ["tower", "spire", "turret"], ["castle", "fortress", "citadel"],
    ["mountain", "peak", "summit"], ["valley", "dale", "glen"],
    ["island", "isle", "atoll"], ["lake", "pond", "lagoon"],
    ["beach", "shore", "coast"], ["cloud", "mist", "haze"],
    ["fire", "blaze", "flame"], ["light", "glow", "gleam"],
    ["noise", "sound", "din"], ["smell", "odor", "scent"],
    ["pain", "ache", "hurt"], ["fear", "dread", "terror"],
    ["joy", "delight", "bliss"], ["anger", "rage", "fury"],
    ["truth", "fact", "reality"], ["lie", "falsehood", "fib"],
    ["danger", "peril", "hazard"], ["chance", "opportunity", "opening"],
    ["price", "cost", "fee"], ["reward", "prize", "award"],
    ["speech", "address", "lecture"], ["meeting", "gathering", "assembly"],
    ["party", "celebration", "festivity"], ["war", "conflict", "battle"],
    ["peace", "calm", "tranquility"], ["law court", "tribunal", "bench"],
]

ADJECTIVES = [
    ["big", "large", "huge"], ["small", "little", "tiny"],
    ["fast", "quick", "rapid"], ["slow", "sluggish", "leisurely"],
    ["happy", "glad", "cheerful"], ["sad", "unhappy", "sorrowful"],
    ["smart", "clever", "bright"], ["old", "ancient", "aged"],
    ["new", "fresh", "novel"], ["hot", "warm", "heated"],
    ["cold", "chilly", "cool"], ["beautiful", "pretty", "lovely"],
    ["ugly", "hideous", "unsightly"], ["strong", "powerful", "sturdy"],
    ["weak", "feeble", "frail"], ["rich", "wealthy", "affluent"],
    ["poor", "needy", "destitute"], ["easy", "simple", "effortless"],
    ["hard", "difficult", "tough"], ["quiet", "silent", "hushed"],
    ["loud", "noisy", "boisterous"], ["important", "crucial", "vital"],
    ["strange", "odd", "peculiar"], ["angry", "furious", "irate"],
    ["tired", "weary", "exhausted"], ["brave", "bold", "fearless"],
    ["dark", "dim", "murky"], ["clean", "tidy", "neat"],
    ["dirty", "filthy", "grimy"], ["busy", "occupied", "engaged"],
    ["empty", "vacant", "bare"], ["kind", "gentle", "caring"],
    ["famous", "renowned", "celebrated"], ["wide", "broad", "spacious"],
    ["narrow", "thin", "slim"], ["tall", "lofty", "towering"],
    ["short", "brief", "compact"], ["heavy", "weighty", "hefty"],
    ["light grey", "pale", "ashen"], ["wet", "damp", "soggy"],
    ["dry", "arid", "parched"], ["sharp", "keen", "pointed"],
    ["soft", "tender", "supple"], ["rough", "coarse", "rugged"],
    ["calm", "serene", "placid"], ["wild", "untamed", "savage"],
    ["proud", "dignified", "noble"], ["shy", "timid", "bashful"],
    ["honest", "truthful", "sincere"], ["clever old", "shrewd", "astute"],
    ["strict", "stern", "severe"], ["funny", "amusing", "comical"],
    ["serious", "solemn", "grave"], ["real", "genuine", "authentic"],
    ["huge old", "massive", "enormous"], ["modern", "current", "contemporary"],
]

VERBS = [
    ["saw", "noticed", "observed"], ["made", "built", "created"],
    ["found", "discovered", "located"], ["took", "grabbed", "seized"],
    ["gave", "offered", "handed"], ["liked", "enjoyed", "loved"],
    ["helped", "assisted", "aided"], ["started", "began", "launched"],
    ["ended", "finished", "completed"], ["bought", "purchased", "acquired"],
    ["sold", "traded", "auctioned"], ["carried", "hauled", "transported"],
    ["fixed", "repaired", "mended"], ["broke", "shattered", "smashed"],
    ["chose", "selected", "picked"], ["studied", "examined", "inspected"],
    ["asked", "questioned", "queried"], ["told", "informed", "notified"],
    ["visited", "toured", "explored"], ["cleaned", "washed", "scrubbed"],
    ["painted", "decorated", "adorned"], ["watched", "viewed", "monitored"],
    ["needed", "required", "demanded"], ["wanted", "desired", "craved"],
    ["kept", "retained", "preserved"], ["changed", "altered", "modified"],
    ["showed", "displayed", "revealed"], ["moved", "shifted", "relocated"],
    ["met", "encountered", "greeted"], ["followed", "pursued", "tracked"],
    ["hid", "concealed", "stashed"], ["lost", "misplaced", "mislaid"],
    ["stole", "pilfered", "swiped"], ["praised", "lauded", "commended"],
    ["blamed", "accused", "faulted"], ["guarded", "protected", "shielded"],
    ["described", "portrayed", "depicted"], ["ignored", "neglected", "overlooked"],
]

ADVERBS = [
    ["quickly", "rapidly", "swiftly"], ["slowly", "gradually", "unhurriedly"],
    ["quietly", "silently", "softly"], ["carefully", "cautiously", "warily"],
    ["happily", "cheerfully", "gladly"], ["often", "frequently", "regularly"],
    ["suddenly", "abruptly", "unexpectedly"], ["finally", "eventually", "ultimately"],
    ["clearly", "plainly", "obviously"], ["rarely", "seldom", "infrequently"],
]

INTRANSITIVE = [
    "walked", "ran", "laughed", "slept", "waited", "arrived", "left",
    "smiled", "cried", "shouted", "danced", "sang", "rested", "worked",
    "returned", "vanished", "paused", "stumbled", "wandered", "hurried",
]

NAMES = [
    "Anna", "Ben", "Clara", "David", "Elena", "Felix", "Grace", "Henry",
    "Iris", "Jonas", "Karin", "Leo", "Maya", "Nils", "Olga", "Paul",
    "Rosa", "Samuel", "Tara", "Victor", "Wendy", "Yusuf", "Zoe", "Marta",
]

PREPOSITIONS = ["in", "near", "behind", "under", "over", "beside", "across",
                "through", "around", "inside", "beyond", "toward"]
DETERMINERS = ["the", "a", "this", "that", "every", "one"]
PLACES = ["Monday", "spring", "winter", "the morning", "the evening",
          "the summer", "the autumn", "noon", "midnight"]
CONJUNCTIONS = ["and", "but", "so", "because", "while", "although"]


def flat(groups):
    return [w for g in groups for w in g if " " not in w]


def build_lexicon():
    lexicon = {}
    for groups in (NOUNS, ADJECTIVES, VERBS, ADVERBS):
        for g in groups:
            words = [w for w in g if " " not in w]
            for w in words:
                others = [o for o in words if o != w]
                if others:
                    lexicon[w] = others
    return dict(sorted(lexicon.items()))


class Grammar:
    def __init__(self, rng):
        self.rng = rng
        self.nouns = flat(NOUNS)
        self.adjs = flat(ADJECTIVES)
        self.verbs = flat(VERBS)
        self.advs = flat(ADVERBS)

    def topic(self):
        # Each document favors a subset of the lexicon so documents differ.
        r = self.rng
        self.doc_nouns = r.sample(self.nouns, 40)
        self.doc_adjs = r.sample(self.adjs, 30)
        self.doc_verbs = r.sample(self.verbs, 30)
        self.doc_names = r.sample(NAMES, 4)

    def pick(self, local, full, p_local=0.75):
        return self.rng.choice(local if self.rng.random() < p_local else full)

    def noun(self):
        return self.pick(self.doc_nouns, self.nouns)

    def adj(self):
        return self.pick(self.doc_adjs, self.adjs)

    def verb(self):
        return self.pick(self.doc_verbs, self.verbs)

    def np(self):
        r = self.rng
        det = r.choice(DETERMINERS)
        parts = [det]
        if r.random() < 0.55:
            parts.append(self.adj())
            if r.random() < 0.2:
                parts += ["and", self.adj()]
        parts.append(self.noun())
        return parts

    def subject(self):
        r = self.rng
        if r.random() < 0.35:
            return [r.choice(self.doc_names)]
        return self.np()

    def clause(self):
        r = self.rng
        s = self.subject()
        if r.random() < 0.25:
            s.append(r.choice(self.advs))
        kind = r.random()
        if kind < 0.55:
            s += [self.verb()] + self.np()
            if r.random() < 0.5:
                s += [r.choice(PREPOSITIONS)] + self.np()
        elif kind < 0.8:
            s += [r.choice(INTRANSITIVE)]
            if r.random() < 0.6:
                s += [r.choice(PREPOSITIONS)] + self.np()
        else:
            s += ["was", self.adj()]
            if r.random() < 0.4:
                s += ["and", self.adj()]
        return s

    def sentence(self):
        r = self.rng
        words = []
        if r.random() < 0.2:
            words += ["In", r.choice(PLACES), ","]
        words += self.clause()
        if r.random() < 0.35:
            words += [",", r.choice(CONJUNCTIONS)] + self.clause()
        if r.random() < 0.1:
            words += ["(", "and", r.choice(self.doc_names), r.choice(INTRANSITIVE), ")"]
        end = r.choices([".", "!", "?", ";"], weights=[80, 6, 8, 6])[0]
        words.append(end)
        first = words[0]
        words[0] = first[0].upper() + first[1:]
        return words

    def document(self, n_tokens):
        self.topic()
        out = []
        while len(out) < n_tokens:
            out += self.sentence()
        return out


def render(tokens):
    text = ""
    for i, tok in enumerate(tokens):
        glue = tok in {".", ",", ";", "!", "?", ")"} or (i > 0 and tokens[i - 1] == "(")
        if text and not glue:
            text += " "
        text += tok
    return text


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data"))
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    rng = random.Random(20240521)
    g = Grammar(rng)

    corpus = []
    size = 0
    while size < 200_000:
        line = render(g.document(rng.randint(150, 300)))
        corpus.append(line)
        size += len(line) + 1
    with open(os.path.join(args.out, "corpus.txt"), "w") as f:
        f.write("\n".join(corpus) + "\n")

    def records(n, with_reference):
        out = []
        for _ in range(n):
            toks = g.document(240)
            prompt, rest = toks[:30], toks[30:230]
            rec = {"prompt": render(prompt), "natural_text": render(rest)}
            if with_reference:
                rec["reference"] = render(rest)
            out.append(rec)
        return out

    for name, n, ref in (("dataset.jsonl", 50, True), ("heldout.jsonl", 500, False)):
        with open(os.path.join(args.out, name), "w") as f:
            for rec in records(n, ref):
                f.write(json.dumps(rec) + "\n")

    with open(os.path.join(args.out, "lexicon.json"), "w") as f:
        json.dump(build_lexicon(), f, indent=1, sort_keys=True)
        f.write("\n")


if __name__ == "__main__":
    main()

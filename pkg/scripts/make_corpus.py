#!/usr/bin/env python3
"""Regenerate the bundled mini-corpus under data/mini/.

The corpus is produced by a small hand-written probabilistic grammar of
news-style English, so it is reproducible from this file alone and carries
no third-party license. Output is pre-tokenized (space separated, punctuation
split off), one sentence per line.

    python scripts/make_corpus.py --out data/mini --seed 13
"""

import argparse
import os
import random

# (singular, plural)
PEOPLE = [
    ("person", "people"), ("doctor", "doctors"), ("teacher", "teachers"),
    ("official", "officials"), ("worker", "workers"), ("student", "students"),
    ("lawyer", "lawyers"), ("farmer", "farmers"), ("nurse", "nurses"),
    ("reporter", "reporters"), ("manager", "managers"), ("player", "players"),
    ("voter", "voters"), ("resident", "residents"), ("investor", "investors"),
    ("patient", "patients"), ("driver", "drivers"), ("soldier", "soldiers"),
    ("scientist", "scientists"), ("engineer", "engineers"), ("child", "children"),
    ("woman", "women"), ("man", "men"), ("leader", "leaders"), ("coach", "coaches"),
    ("analyst", "analysts"), ("spokesman", "spokesmen"), ("judge", "judges"),
    ("senator", "senators"), ("minister", "ministers"), ("director", "directors"),
    ("customer", "customers"), ("owner", "owners"), ("fan", "fans"),
    ("opponent", "opponents"), ("supporter", "supporters"), ("critic", "critics"),
]
GROUPS = [
    ("company", "companies"), ("government", "governments"), ("team", "teams"),
    ("bank", "banks"), ("group", "groups"), ("committee", "committees"),
    ("agency", "agencies"), ("union", "unions"), ("party", "parties"),
    ("court", "courts"), ("hospital", "hospitals"), ("school", "schools"),
    ("council", "councils"), ("newspaper", "newspapers"), ("firm", "firms"),
    ("club", "clubs"), ("university", "universities"), ("police", "police"),
]
THINGS = [
    ("plan", "plans"), ("bill", "bills"), ("report", "reports"), ("deal", "deals"),
    ("price", "prices"), ("tax", "taxes"), ("tariff", "tariffs"), ("law", "laws"),
    ("project", "projects"), ("problem", "problems"), ("decision", "decisions"),
    ("market", "markets"), ("budget", "budgets"), ("proposal", "proposals"),
    ("program", "programs"), ("policy", "policies"), ("rate", "rates"),
    ("film", "films"), ("book", "books"), ("game", "games"), ("song", "songs"),
    ("house", "houses"), ("car", "cars"), ("road", "roads"), ("bridge", "bridges"),
    ("home", "homes"), ("job", "jobs"), ("loan", "loans"), ("contract", "contracts"),
    ("election", "elections"), ("vote", "votes"), ("case", "cases"),
    ("study", "studies"), ("test", "tests"), ("result", "results"),
    ("change", "changes"), ("rule", "rules"), ("system", "systems"),
    ("product", "products"), ("service", "services"), ("view", "views"),
    ("idea", "ideas"), ("question", "questions"), ("story", "stories"),
    ("meeting", "meetings"), ("season", "seasons"), ("match", "matches"),
    ("storm", "storms"), ("fire", "fires"), ("attack", "attacks"),
    ("treatment", "treatments"), ("drug", "drugs"), ("risk", "risks"),
    ("cost", "costs"), ("share", "shares"), ("profit", "profits"),
    ("loss", "losses"), ("sale", "sales"), ("order", "orders"),
]
MASS = [
    "money", "health", "energy", "oil", "water", "food", "power", "support",
    "trade", "growth", "research", "security", "depression", "climate",
    "manufacturing", "education", "traffic", "damage", "information", "evidence",
]
NAMES = [
    "Smith", "Johnson", "Brown", "Miller", "Davis", "Wilson", "Taylor", "Clark",
    "Lewis", "Walker", "Young", "King", "Wright", "Green", "Baker", "Adams",
    "Nelson", "Hill", "Campbell", "Mitchell", "Roberts", "Carter", "Phillips",
    "Evans", "Turner", "Parker", "Collins", "Edwards", "Stewart", "Morris",
    "Obama", "Clinton", "Bush", "Merkel", "Brown", "Sarkozy",
]
TITLES = ["Mr.", "Mrs.", "Dr.", "President", "Senator", "Judge", "Coach"]
PLACES = [
    "London", "Paris", "Washington", "New York", "Chicago", "Boston", "Texas",
    "California", "Florida", "Europe", "China", "Japan", "India", "Russia",
    "Iraq", "Iran", "Canada", "Mexico", "Germany", "France", "Britain", "Africa",
    "the city", "the country", "the region", "the state", "the area",
]
ADJ = [
    "new", "old", "big", "small", "good", "bad", "important", "major", "local",
    "national", "public", "private", "financial", "economic", "political",
    "serious", "strong", "weak", "large", "high", "low", "recent", "final",
    "early", "late", "young", "former", "current", "global", "foreign",
    "difficult", "simple", "clear", "open", "free", "full", "special",
    "popular", "successful", "poor", "rich", "safe", "dangerous", "severe",
    "mental", "medical", "average", "total", "annual", "official",
]
PRED_ADJ = [
    "good", "bad", "happy", "sure", "ready", "worried", "concerned", "confident",
    "optimistic", "angry", "clear", "likely", "unlikely", "important", "fine",
    "possible", "difficult", "available", "safe", "wrong", "right", "true",
    "expensive", "cheap", "popular", "successful", "strong", "weak", "serious",
]
DEGREE = ["very", "quite", "still", "also", "not", "too", "really", "so"]
ADV = [
    "yesterday", "today", "last week", "last year", "this year", "on Monday",
    "on Tuesday", "on Wednesday", "on Thursday", "on Friday", "in March",
    "in 2008", "in 2009", "earlier this month", "next year", "again", "quickly",
    "recently", "later", "at home", "at the time", "for years",
]
PREP_PLACE = ["in", "near", "outside", "across", "around", "from"]
PREP = ["of", "for", "with", "about", "on", "under", "after", "before", "against", "over"]
NUMBERS = [
    "two", "three", "four", "five", "six", "ten", "20", "30", "100", "several",
    "many", "some", "few", "dozens of", "hundreds of", "thousands of",
]
DET_SG = ["the", "the", "the", "a", "this", "that", "his", "her", "its", "their", "every", "one"]
DET_PL = ["the", "the", "the", "these", "those", "some", "many", "their", "our", "all", "most"]
# (base, third-singular, past, participle)
TRANS = [
    ("support", "supports", "supported", "supported"),
    ("approve", "approves", "approved", "approved"),
    ("reject", "rejects", "rejected", "rejected"),
    ("announce", "announces", "announced", "announced"),
    ("buy", "buys", "bought", "bought"),
    ("sell", "sells", "sold", "sold"),
    ("build", "builds", "built", "built"),
    ("win", "wins", "won", "won"),
    ("lose", "loses", "lost", "lost"),
    ("need", "needs", "needed", "needed"),
    ("want", "wants", "wanted", "wanted"),
    ("face", "faces", "faced", "faced"),
    ("raise", "raises", "raised", "raised"),
    ("cut", "cuts", "cut", "cut"),
    ("find", "finds", "found", "found"),
    ("see", "sees", "saw", "seen"),
    ("take", "takes", "took", "taken"),
    ("make", "makes", "made", "made"),
    ("give", "gives", "gave", "given"),
    ("receive", "receives", "received", "received"),
    ("expect", "expects", "expected", "expected"),
    ("pay", "pays", "paid", "paid"),
    ("reach", "reaches", "reached", "reached"),
    ("block", "blocks", "blocked", "blocked"),
    ("review", "reviews", "reviewed", "reviewed"),
    ("discuss", "discusses", "discussed", "discussed"),
    ("criticize", "criticizes", "criticized", "criticized"),
    ("promise", "promises", "promised", "promised"),
    ("launch", "launches", "launched", "launched"),
    ("cause", "causes", "caused", "caused"),
    ("report", "reports", "reported", "reported"),
    ("treat", "treats", "treated", "treated"),
    ("increase", "increases", "increased", "increased"),
    ("reduce", "reduces", "reduced", "reduced"),
    ("watch", "watches", "watched", "watched"),
    ("hire", "hires", "hired", "hired"),
]
INTRANS = [
    ("suffer", "suffers", "suffered", "suffered"),
    ("rise", "rises", "rose", "risen"),
    ("fall", "falls", "fell", "fallen"),
    ("grow", "grows", "grew", "grown"),
    ("fail", "fails", "failed", "failed"),
    ("succeed", "succeeds", "succeeded", "succeeded"),
    ("arrive", "arrives", "arrived", "arrived"),
    ("leave", "leaves", "left", "left"),
    ("work", "works", "worked", "worked"),
    ("live", "lives", "lived", "lived"),
    ("die", "dies", "died", "died"),
    ("return", "returns", "returned", "returned"),
    ("improve", "improves", "improved", "improved"),
    ("continue", "continues", "continued", "continued"),
    ("recover", "recovers", "recovered", "recovered"),
    ("struggle", "struggles", "struggled", "struggled"),
    ("agree", "agrees", "agreed", "agreed"),
    ("resign", "resigns", "resigned", "resigned"),
    ("protest", "protests", "protested", "protested"),
    ("react", "reacts", "reacted", "reacted"),
]
SAY = [("say", "says", "said"), ("believe", "believes", "believed"),
       ("think", "thinks", "thought"), ("warn", "warns", "warned"),
       ("claim", "claims", "claimed"), ("argue", "argues", "argued"),
       ("fear", "fears", "feared")]
CONJ = ["but", "and", "because", "although", "while", "after", "before", "so", "as", "when"]
SOURCES = [
    "the newspaper reported", "officials said", "police said", "the report said",
    "he said", "she said", "they said", "the company said", "analysts said",
    "according to the report", "a spokesman said",
]


class Grammar:
    def __init__(self, rng):
        self.r = rng

    def pick(self, seq):
        return self.r.choice(seq)

    def chance(self, p):
        return self.r.random() < p

    # -- noun phrases; each returns (tokens, plural)

    def common_np(self, pool, allow_pp=True):
        sg, pl = self.pick(pool)
        plural = self.chance(0.35)
        toks = []
        if plural:
            if self.chance(0.25):
                toks += self.pick(NUMBERS).split()
            else:
                toks.append(self.pick(DET_PL))
        else:
            toks.append(self.pick(DET_SG))
        if self.chance(0.35):
            adj = self.pick(ADJ)
            if toks[-1] == "a" and adj[0] in "aeiou":
                toks[-1] = "an"
            toks.append(adj)
        elif toks[-1] == "a" and (pl if plural else sg)[0] in "aeiou":
            toks[-1] = "an"
        toks.append(pl if plural else sg)
        if allow_pp and self.chance(0.2):
            toks += self.pp(allow_pp=False)
        return toks, plural

    def mass_np(self):
        toks = []
        if self.chance(0.4):
            toks.append(self.pick(["the", "more", "less", "much", "some", "no"]))
        if self.chance(0.3):
            toks.append(self.pick(ADJ))
        toks.append(self.pick(MASS))
        return toks, False

    def name_np(self):
        toks = []
        if self.chance(0.4):
            toks.append(self.pick(TITLES))
        toks.append(self.pick(NAMES))
        return toks, False

    def subject(self):
        x = self.r.random()
        if x < 0.35:
            return self.common_np(PEOPLE)
        if x < 0.55:
            return self.common_np(GROUPS)
        if x < 0.7:
            return self.name_np()
        if x < 0.8:
            return self.pick([(["he"], False), (["she"], False), (["they"], True),
                              (["we"], True), (["it"], False), (["I"], True)])
        if x < 0.92:
            return self.common_np(THINGS)
        return self.mass_np()

    def obj(self):
        x = self.r.random()
        if x < 0.55:
            return self.common_np(THINGS)[0]
        if x < 0.7:
            return self.mass_np()[0]
        if x < 0.85:
            return self.common_np(PEOPLE)[0]
        if x < 0.93:
            return self.common_np(GROUPS, allow_pp=False)[0]
        return self.name_np()[0]

    def pp(self, allow_pp=True):
        if self.chance(0.35):
            return [self.pick(PREP_PLACE)] + self.pick(PLACES).split()
        return [self.pick(PREP)] + self.obj()

    # -- verbs

    def verb_form(self, verb, plural, tense):
        base, third, past, part = verb
        if tense == "past":
            return [past]
        if tense == "present":
            return [base if plural else third]
        if tense == "perfect":
            return ["have" if plural else "has", part]
        if tense == "future":
            return [self.pick(["will", "would", "could", "may", "might"]), base]
        if tense == "negative":
            return [self.pick(["did", "does" if not plural else "do"]), "not", base]
        raise ValueError(tense)

    def be(self, plural, tense):
        if tense == "past":
            return ["were" if plural else "was"]
        if tense == "future":
            return ["will", "be"]
        if tense == "perfect":
            return ["have" if plural else "has", "been"]
        return ["are" if plural else "is"]

    def vp(self, plural):
        tense = self.pick(["past", "past", "past", "present", "perfect", "future", "negative"])
        x = self.r.random()
        if x < 0.45:
            toks = self.verb_form(self.pick(TRANS), plural, tense) + self.obj()
        elif x < 0.7:
            toks = self.verb_form(self.pick(INTRANS), plural, tense)
            if self.chance(0.5):
                toks += self.pp()
        else:
            if tense == "negative":
                tense = "present"
            toks = self.be(plural, tense)
            if self.chance(0.35):
                toks.append(self.pick(DEGREE))
            toks.append(self.pick(PRED_ADJ))
            if self.chance(0.3):
                toks += self.pp(allow_pp=False)
        if self.chance(0.25):
            toks += self.pick(ADV).split()
        return toks

    def clause(self):
        subj, plural = self.subject()
        if subj in (["I"], ["you"]):
            plural = True
        return subj + self.vp(plural)

    def sentence(self):
        x = self.r.random()
        if x < 0.35:
            toks = self.clause()
        elif x < 0.5:
            subj, plural = self.subject()
            say = self.pick(SAY)
            verb = self.pick([say[2], say[2], say[1] if not plural else say[0]])
            toks = subj + [verb]
            if self.chance(0.5):
                toks.append("that")
            toks += self.clause()
        elif x < 0.62:
            toks = self.clause() + [","] + self.pick(SOURCES).split()
        elif x < 0.75:
            toks = self.clause() + [self.pick(CONJ)] + self.clause()
        elif x < 0.85:
            pp = self.pp(allow_pp=False)
            toks = [pp[0][0].upper() + pp[0][1:]] + pp[1:] + [","] + self.clause()
            return self.finish(toks, capitalize=False)
        elif x < 0.93:
            toks = ["``"] + self.clause() + [",", "''"] + self.name_np()[0] + ["said"]
            return self.finish(toks, capitalize=False, quoted=True)
        else:
            subj, plural = self.subject()
            toks = subj + [self.pick(SAY)[2]] + self.clause() + [","] \
                + self.pick(SOURCES).split()
        return self.finish(toks)

    def finish(self, toks, capitalize=True, quoted=False):
        if capitalize and toks[0] not in ("I",) and toks[0][0].islower():
            toks[0] = toks[0][0].upper() + toks[0][1:]
        if quoted and len(toks) > 1 and toks[1][0].islower():
            toks[1] = toks[1][0].upper() + toks[1][1:]
        toks.append(self.pick([".", ".", ".", ".", "!"]) if not quoted else ".")
        return toks


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="data/mini")
    ap.add_argument("--seed", type=int, default=13)
    ap.add_argument("--train", type=int, default=41000)
    ap.add_argument("--valid", type=int, default=8000)
    ap.add_argument("--test", type=int, default=1000)
    ap.add_argument("--max-len", type=int, default=30)
    args = ap.parse_args()

    g = Grammar(random.Random(args.seed))
    total = args.train + args.valid + args.test
    lines = []
    seen = set()
    while len(lines) < total:
        toks = g.sentence()
        if len(toks) > args.max_len:
            continue
        line = " ".join(toks)
        # keep duplicates out of the test split only
        if len(lines) >= args.train + args.valid and line in seen:
            continue
        seen.add(line)
        lines.append(line)

    os.makedirs(args.out, exist_ok=True)
    splits = [("train", lines[:args.train]),
              ("valid", lines[args.train:args.train + args.valid]),
              ("test", lines[args.train + args.valid:])]
    for name, chunk in splits:
        with open(os.path.join(args.out, name + ".txt"), "w", encoding="utf-8") as f:
            f.write("\n".join(chunk) + "\n")
        print("%s: %d sentences" % (name, len(chunk)))


if __name__ == "__main__":
    main()

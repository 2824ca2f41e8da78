"""Regenerates the synthetic fixture: 20 green skills over 12 months.

Run from this directory: python3 generate.py
"""
import csv
import math
import random
import re

MONTHS = [(2024, m) for m in range(1, 13)]

# entryId, mainLabel, altLabels, description
TAXONOMY = [
    (1, "solar panel installation", "photovoltaic installation|pv mounting", "mount photovoltaic modules"),
    (2, "wind turbine maintenance", "wind turbine servicing", "service wind generators"),
    (3, "energy efficiency auditing", "energy audit", "assess building energy use"),
    (4, "waste recycling", "recycling operations", "sort and recover materials"),
    (5, "environmental impact assessment", "eia", "evaluate project effects on nature"),
    (6, "water treatment", "wastewater treatment", "purify and treat water"),
    (7, "sustainable procurement", "green purchasing", "source goods responsibly"),
    (8, "carbon footprint accounting", "emissions accounting", "measure greenhouse emissions"),
    (9, "electric vehicle charging", "ev charger installation", "install vehicle chargers"),
    (10, "circular economy design", "circular design", "design for reuse"),
    (11, "environmental legislation compliance", "environmental compliance", "apply environmental law"),
    (12, "renewable energy project management", "renewables project management", "manage clean energy projects"),
    (13, "battery storage systems", "energy storage", "operate battery banks"),
    (14, "green building certification", "leed certification", "certify sustainable buildings"),
    (15, "organic farming", "organic agriculture", "grow crops without synthetics"),
    (16, "hazardous waste handling", "hazmat handling", "handle dangerous waste"),
    (17, "biodiversity monitoring", "species monitoring", "survey wildlife populations"),
    (18, "heat pump installation", "heat pump fitting", "install heat pumps"),
    (19, "sustainability reporting", "esg reporting", "report environmental performance"),
    (20, "climate risk analysis", "climate risk assessment", "analyse climate exposure"),
    (21, "geothermal drilling", "geothermal well drilling", "drill geothermal wells"),
    (22, "smart grid operation", "smart grid management", "run digital power grids"),
    (23, "composting", "compost production", "turn organic waste into compost"),
    (24, "air quality monitoring", "air pollution monitoring", "measure air pollutants"),
    (25, "sustainable forestry", "forest management", "manage forests sustainably"),
    (26, "hydrogen fuel systems", "hydrogen technology", "operate hydrogen equipment"),
    (27, "eco design", "ecodesign", "reduce product environmental impact"),
    (28, "soil remediation", "land remediation", "clean contaminated soil"),
    (29, "energy modelling", "building energy simulation", "simulate energy demand"),
    (30, "green logistics", "sustainable logistics", "cut transport emissions"),
]

# Skill text variants written by job boards for the 20 skills that occur.
VARIANTS = {
    1: ["Solar panel installation", "solar panels installation", "Solar Panel Installation "],
    2: ["wind turbine maintenance", "Wind-turbine maintenance"],
    3: ["energy efficiency auditing", "energy efficiency audits"],
    4: ["waste recycling", "Waste  recycling"],
    5: ["environmental impact assessment"],
    6: ["water treatment", "Water treatment"],
    7: ["sustainable procurement"],
    8: ["carbon footprint accounting", "carbon footprint accounts"],
    9: ["electric vehicle charging", "electric vehicle chargers"],
    10: ["circular economy design", "circular economy"],
    11: ["environmental legislation compliance"],
    12: ["renewable energy project management"],
    13: ["battery storage systems", "battery storage"],
    14: ["green building certification"],
    15: ["organic farming"],
    16: ["hazardous waste handling"],
    17: ["biodiversity monitoring"],
    18: ["heat pump installation"],
    19: ["sustainability reporting"],
    20: ["climate risk analysis"],
}

NON_GREEN = [
    "customer service", "microsoft excel", "teamwork", "sales negotiation",
    "forklift operation", "payroll processing", "java programming",
    "social media marketing", "cashier duties", "inventory control",
    "english proficiency", "truck driving", "bookkeeping", "public speaking",
    "python programming", "illustration", "data entry", "nursing care",
    "food preparation", "punctuality", "sql databases", "welding",
    "project scheduling", "quality control", "cold calling",
]

TITLES = ["technician", "analyst", "engineer", "coordinator", "specialist", "assistant", "supervisor"]
SOURCES = ["Indeed", "OCC Mundial", "LinkedIn"]


def growth(entry, i):
    """Expected monthly count of green skill `entry` in month index i (0..11)."""
    t = i / 11
    kind = entry % 4
    base = 4 + (entry * 7) % 17
    if entry in (12, 20):  # large and surging
        return base * (0.3 + 2.7 * t * t)
    if kind == 0:  # large and rising
        return base * (0.6 + 2.4 * t)
    if kind == 1:  # small, rising fast
        return 1.5 + 4 * t * t
    if kind == 2:  # flat
        return base * (1 + 0.1 * math.sin(i))
    return base * (1.6 - 1.1 * t)  # falling


def main():
    rng = random.Random(42)
    with open("taxonomy.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["entryId", "mainLabel", "altLabels", "description"])
        w.writerows(TAXONOMY)

    rows = []
    job = 0
    for i, (year, month) in enumerate(MONTHS):
        for entry in sorted(VARIANTS):
            n = max(0, round(growth(entry, i) + rng.uniform(-1, 1)))
            for _ in range(n):
                job += 1
                jid = f"J{job:05d}"
                title = f"{rng.choice(['solar', 'energy', 'environmental', 'operations', 'plant'])} {rng.choice(TITLES)}"
                src = rng.choice(SOURCES)
                rows.append([jid, title, rng.choice(VARIANTS[entry]), month, year, src])
                for s in rng.sample(NON_GREEN, rng.randint(1, 3)):
                    rows.append([jid, title, s, month, year, src])
        for _ in range(rng.randint(150, 180)):
            job += 1
            jid = f"J{job:05d}"
            title = f"{rng.choice(['sales', 'office', 'warehouse', 'it'])} {rng.choice(TITLES)}"
            src = rng.choice(SOURCES)
            for s in rng.sample(NON_GREEN, rng.randint(2, 4)):
                rows.append([jid, title, s, month, year, src])

    # Malformed and duplicate rows exercised by the cleaning step.
    rows.append(["J00001", rows[0][1], rows[0][2], rows[0][3], rows[0][4], rows[0][5]])
    rows.append(["J00002", "energy analyst", "<b></b>", 1, 2024, "Indeed"])
    rows.append(["J00003", "energy analyst", "teamwork", "13", 2024, "Indeed"])
    rows.append(["J00004", "energy analyst", "welding", "march", 2024, "OCC"])

    with open("records.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["job_id", "title", "skill", "month", "year", "source"])
        w.writerows(rows)


# Mirror of the offline trigram embedder, used to check match margins.
def clean(s):
    s = re.sub(r"<[^>]*>", " ", s).lower()
    out, pend = [], False
    for ch in s:
        if ch.isspace():
            pend = True
        elif ch.isalnum():
            if pend and out:
                out.append(" ")
            pend = False
            out.append(ch)
    return "".join(out)


def embed(text, dim=1024):
    c = " " + clean(text) + " "
    v = [0.0] * dim
    for k in range(len(c) - 2):
        h = 0xCBF29CE484222325
        for b in c[k:k + 3].encode():
            h = ((h ^ b) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
        v[h % dim] += 1
    n = math.sqrt(sum(x * x for x in v))
    return [x / n for x in v]


def check():
    ents = {e[0]: embed(" ".join([e[1]] + e[2].split("|") + [e[3]])) for e in TAXONOMY}
    cos = lambda a, b: sum(x * y for x, y in zip(a, b))
    for entry, texts in VARIANTS.items():
        for t in texts:
            q = embed(t)
            best = max(ents, key=lambda e: cos(q, ents[e]))
            print(f"green  {t!r:45} -> {best:2} ({cos(q, ents[best]):.3f}) want {entry}")
    for t in NON_GREEN:
        q = embed(t)
        best = max(ents, key=lambda e: cos(q, ents[e]))
        print(f"other  {t!r:45} -> {best:2} ({cos(q, ents[best]):.3f})")


if __name__ == "__main__":
    import sys
    if "--check" in sys.argv:
        check()
    else:
        main()

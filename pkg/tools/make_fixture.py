"""Regenerate the bundled synthetic workbook fixture.

Writes ``src/ctxbubble/data/fixture_rows.jsonl``: four sheets of a
waterproofing quote workbook, one JSON record per row, 70-200 terms per row,
with clusters of near-duplicate rows inside "Scope of Works".

    python tools/make_fixture.py
"""

from __future__ import annotations

import json
import random
from pathlib import Path

SEED = 20240611
SOURCE = "job-4471-quote.xlsx"
OUT = Path(__file__).resolve().parents[1] / "src" / "ctxbubble" / "data" / "fixture_rows.jsonl"

LOCATIONS = ["level B2 carpark", "lift pit", "east retaining wall", "plant room slab", "ramp to basement",
             "stair core 3", "north boundary wall", "podium transfer slab", "detention tank", "grease trap pit"]
TASKS = ["excavation of pad footings", "formwork to slab edges", "installation of sheet membrane",
         "backfilling behind retaining walls", "crack injection to existing walls", "surface preparation by grinding",
         "application of primer coats", "installation of drainage cell", "sealing of penetrations",
         "protection board fixing", "flood testing of wet areas", "removal of spoil"]
TRADES = ["the concreter", "the hydraulic plumber", "the builder's site manager", "the structural engineer",
          "the excavation subcontractor", "the certifier"]
EXCLUSIONS = ["dewatering", "rock breaking", "traffic management", "asbestos removal", "after hours access",
              "council permits", "scaffold hire"]

SCOPE_SENTENCES = [
    "The scope of work includes {task} at the {loc}.",
    "Contractor shall carry out all work required for {task} in accordance with the issued drawings.",
    "This scope of work covers supply of labour plant and materials for {task}.",
    "Work under this scope of work includes {task} and {task2}.",
    "All work of this trade shall be coordinated with {trade} before starting.",
    "Exclusions from the scope of work are {excl} and {excl2}.",
    "The scope of work at the {loc} is to be completed in stage {n} of the program.",
    "Any change to the scope of work must be confirmed in writing by {trade}.",
    "Inspection of completed work shall be arranged with {trade} at the end of each day.",
    "Scope of work item {n}: {task} to the {loc}.",
]

BELOW_GRADE_SENTENCES = [
    "Below grade waterproofing to the {loc} uses a {product} system.",
    "Provide drainage cell and geotextile filter fabric behind the {loc}.",
    "Membrane laps are {n}0 mm minimum at every joint and corner.",
    "Hydrostatic pressure testing of the {loc} is required before backfill.",
    "Below grade work includes {bgtask}.",
    "Substrate moisture readings must not exceed {n} percent prior to priming.",
    "Waterstops are installed at each construction joint in the {loc}.",
    "Tanking returns up the wall face by {n}00 mm above finished ground level.",
    "Protection board is fixed over the membrane before any backfill is placed.",
    "Agricultural drain pipe discharges to the {loc} sump pit.",
]
BG_TASKS = ["tanking of the lift pit", "negative side crystalline coating", "bentonite panels to piled walls",
            "injection hoses at cold joints", "torch-on sheet to the podium", "sealant to pipe penetrations"]

PRODUCTS = ["polyurethane liquid membrane", "bituminous torch-on sheet", "crystalline slurry coating",
            "bentonite geocomposite panel", "acrylic primer", "hydrophilic waterstop strip",
            "polymer-modified cementitious render", "epoxy injection resin"]
PRODUCT_SENTENCES = [
    "{product} supplied in {n} litre pails with a coverage rate near {n2} square metres per litre.",
    "Unit rate for {product} is ${n}{n2} per square metre installed.",
    "Pricing line item {n}: {product}, quantity {n}{n2} square metres.",
    "Manufacturer data sheet for {product} to be attached to the quotation.",
    "{product} has a cure time near {n} hours at twenty degrees.",
    "Colour for {product} is grey unless the client nominates otherwise.",
    "Delivery lead time for {product} is {n} business days.",
    "{product} is compatible with the nominated primer and sealant.",
]

TERMS_SENTENCES = [
    "Payment terms are {n}0 days from date on invoice.",
    "Warranty period of {n} years for workmanship runs from practical completion.",
    "Variations require written approval by the client before commencement.",
    "Retention of {n} percent applies to each progress claim.",
    "Liability is limited to the contract value stated in this quotation.",
    "Client name and site address appear on the front page.",
    "Prices exclude GST unless stated otherwise.",
    "This quotation remains valid for {n}0 days.",
    "Disputes are referred to mediation before any legal proceedings.",
    "The client is responsible for site access and power.",
    "Delays caused by weather are excluded from liquidated damages.",
    "Insurance certificates are available upon request.",
]


def fill(rng: random.Random, template: str) -> str:
    return template.format(
        task=rng.choice(TASKS), task2=rng.choice(TASKS), loc=rng.choice(LOCATIONS),
        trade=rng.choice(TRADES), excl=rng.choice(EXCLUSIONS), excl2=rng.choice(EXCLUSIONS),
        product=rng.choice(PRODUCTS), bgtask=rng.choice(BG_TASKS),
        n=rng.randint(2, 9), n2=rng.randint(1, 9),
    )


def term_count(text: str) -> int:
    return len(text.split())


def paragraph(rng: random.Random, bank: list[str], lo: int, hi: int) -> str:
    target = rng.randint(lo, hi)
    sentences: list[str] = []
    while term_count(" ".join(sentences)) < target:
        sentences.append(fill(rng, rng.choice(bank)))
    while term_count(" ".join(sentences)) > hi:
        sentences.pop()
    text = " ".join(sentences)
    assert lo <= term_count(text) <= hi, (lo, hi, text)
    return text


def near_duplicate(rng: random.Random, text: str) -> str:
    """Swap a few digits and one location so the row is almost, but not exactly, the same."""
    words = text.split()
    digits = [i for i, w in enumerate(words) if any(ch.isdigit() for ch in w)]
    for i in rng.sample(digits, min(2, len(digits))):
        words[i] = "".join(str(rng.randint(2, 9)) if ch.isdigit() else ch for ch in words[i])
    out = " ".join(words)
    loc = next((l for l in LOCATIONS if l in out), None)
    if loc:
        out = out.replace(loc, rng.choice([l for l in LOCATIONS if l != loc]), 1)
    return out


def build() -> list[dict]:
    rng = random.Random(SEED)
    rows: list[tuple[str, str]] = []

    # 10 clusters of near-duplicates (1 base + 2 variants) plus 10 singletons
    for _ in range(10):
        base = paragraph(rng, SCOPE_SENTENCES, 120, 200)
        rows.append(("Scope of Works", base))
        for _ in range(2):
            rows.append(("Scope of Works", near_duplicate(rng, base)))
    for _ in range(10):
        rows.append(("Scope of Works", paragraph(rng, SCOPE_SENTENCES, 70, 200)))

    rows += [("Below Grade", paragraph(rng, BELOW_GRADE_SENTENCES, 101, 140)) for _ in range(30)]
    rows += [("Products", paragraph(rng, PRODUCT_SENTENCES, 101, 130)) for _ in range(25)]
    for _ in range(25):
        # contract terms mention "of" at most twice, so the negative sheet boost outweighs tf
        text = paragraph(rng, TERMS_SENTENCES, 90, 200)
        while text.lower().split().count("of") > 2:
            text = paragraph(rng, TERMS_SENTENCES, 90, 200)
        rows.append(("Terms & Conditions", text))

    counters: dict[str, int] = {}
    records = []
    for sheet, text in rows:
        n = counters.get(sheet, 0)
        counters[sheet] = n + 1
        records.append({"source_doc": SOURCE, "section_label": sheet, "row_number": n + 2, "text": text})
    return records


def main() -> None:
    records = build()
    OUT.parent.mkdir(parents=True, exist_ok=True)
    with open(OUT, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
    print(f"wrote {len(records)} rows to {OUT}")


if __name__ == "__main__":
    main()

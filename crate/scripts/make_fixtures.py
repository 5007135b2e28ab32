#!/usr/bin/env python3
"""Regenerates the checked-in fixtures under fixtures/. Deterministic."""

import csv
import datetime as dt
import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "fixtures"

AUDIENCES = [
    "office workers commuting across the city",
    "parents juggling school runs and groceries",
    "small restaurant owners growing delivery orders",
    "university students on a tight budget",
]
BENEFITS = [
    "save twenty minutes on every trip",
    "pay later with no hidden fees",
    "get dinner delivered before the rain starts",
    "split costs with friends in one tap",
    "earn points on every order",
]
FRAMES = [
    "For {aud}: {ben}.",
    "Built for {aud}, so you can {ben}.",
    "{ben_cap} with the app made for {aud}.",
]
BRANDS = ["Arunika", "Arunika", "Sagara"]


def ads(rng):
    start = dt.date(2023, 9, 1)
    lines = []
    i = 0
    for a, aud in enumerate(AUDIENCES):
        for b, ben in enumerate(BENEFITS):
            for f, frame in enumerate(FRAMES):
                body = frame.format(aud=aud, ben=ben, ben_cap=ben[0].upper() + ben[1:])
                first = start + dt.timedelta(days=rng.randrange(0, 60))
                last = first + dt.timedelta(days=rng.randrange(3, 40))
                lines.append({
                    "brand": BRANDS[(a + b + f) % 3],
                    "body_text": body,
                    "headline": ben[0].upper() + ben[1:],
                    "media_refs": [f"media/ad-{i:02d}.png"],
                    "first_seen": first.isoformat(),
                    "last_seen": last.isoformat(),
                    "platform": "facebook" if i % 2 == 0 else "instagram",
                })
                i += 1
    assert len(lines) == 60
    return lines


OFFERINGS = [
    {"offering_id": "ride-pass", "name": "Ride Pass", "brand": "Arunika",
     "description": "Monthly subscription with discounted rides at peak hours."},
    {"offering_id": "paylater", "name": "PayLater", "brand": "Arunika",
     "description": "Buy now and pay at the end of the month."},
    {"offering_id": "merchant-boost", "name": "Merchant Boost", "brand": "Sagara",
     "description": "Promoted listings for restaurant partners."},
]

# Weekly totals, ISO weeks 2023-W40 to 2023-W52:
# (impressions, clicks, lpv, results, spend)
WEEKS = [
    (20000, 718, 350, 6, "190.00"),      # CTR peak 3.59%
    (18000, 500, 260, 8, "221.44"),      # CPR minimum 27.68
    (14000, 420, 210, 5, "175.18"),      # spend minimum
    (50000, 1500, 700, 12, "703.00"),    # CPM peak 14.06
    (35000, 900, 400, 2, "416.56"),      # CPR maximum 208.28
    (120000, 3000, 1400, 30, "1380.25"),
    (200000, 5200, 2500, 45, "2410.70"),
    (360000, 9000, 4300, 60, "4664.91"), # spend maximum
    (300000, 7800, 3700, 52, "3905.40"),
    (250000, 6000, 2900, 40, "3120.00"),
    (180000, 4100, 2000, 28, "2150.35"),
    (90000, 2000, 980, 15, "1040.80"),
    (40000, 900, 450, 6, "480.12"),
]


def split(total, weights):
    """Largest-remainder split of an integer total."""
    s = sum(weights)
    raw = [total * w / s for w in weights]
    out = [int(r) for r in raw]
    order = sorted(range(len(weights)), key=lambda i: (-(raw[i] - out[i]), i))
    for i in order[: total - sum(out)]:
        out[i] += 1
    return out


def telemetry(rng):
    rows = []
    monday = dt.date(2023, 10, 2)
    for w, (imps, clicks, lpv, results, spend) in enumerate(WEEKS):
        cells = [(d, c) for d in range(7) for c in ("cr-hero", "cr-promo")]
        weights = [rng.uniform(0.6, 1.4) * (1.3 if c == "cr-hero" else 1.0) for _, c in cells]
        cents = int(round(float(spend) * 100))
        cols = [split(imps, weights), split(clicks, weights), split(lpv, weights),
                split(results, weights), split(cents, weights)]
        for i, (d, c) in enumerate(cells):
            im, cl, lp, re, ce = (col[i] for col in cols)
            rows.append({
                "date": (monday + dt.timedelta(days=7 * w + d)).isoformat(),
                "creative_id": c,
                "impressions": im,
                "clicks": cl,
                "lpv": lp,
                "results": re,
                "spend": f"{ce // 100}.{ce % 100:02d}",
                "reach": im * 4 // 5,
            })
    rows.sort(key=lambda r: (r["date"], r["creative_id"]))
    return rows


# Original creative and three ablated layouts; CTR ratios 0.692, 0.250, 0.857.
VARIANTS = [
    ("original", "Original", 100000, 5000, 2600, 120, ""),
    ("v1", "Layout 1", 100000, 3460, 1384, 70, "headline"),
    ("v2", "Layout 2", 100000, 1250, 488, 20, "product shot"),
    ("v3", "Layout 3", 100000, 4285, 1910, 95, "logo"),
]
VARIANT_HEADER = ["variant_id", "label", "impressions", "clicks", "lpv", "results", "removed_elements"]


def heatmap():
    w, h = 16, 12
    weights = []
    for y in range(h):
        for x in range(w):
            a = max(0.0, 1.0 - ((x - 4) ** 2 + (y - 3) ** 2) / 10.0)
            b = 0.7 * max(0.0, 1.0 - ((x - 11) ** 2 + (y - 8) ** 2) / 8.0)
            weights.append(round(a + b + 0.05, 4))
    return {"creative_id": "cr-hero", "width": w, "height": h, "weights": weights}


def main():
    rng = random.Random(20231002)
    OUT.mkdir(exist_ok=True)
    with open(OUT / "ads_60.jsonl", "w") as f:
        for line in ads(rng):
            f.write(json.dumps(line) + "\n")
    (OUT / "offerings.json").write_text(json.dumps(OFFERINGS, indent=2) + "\n")
    rows = telemetry(rng)
    with open(OUT / "telemetry.csv", "w", newline="") as f:
        wr = csv.DictWriter(f, fieldnames=list(rows[0].keys()), lineterminator="\n")
        wr.writeheader()
        wr.writerows(rows)
    with open(OUT / "ablation_original.csv", "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(VARIANT_HEADER)
        wr.writerow(VARIANTS[0])
    with open(OUT / "ablation_variants.csv", "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(VARIANT_HEADER)
        wr.writerows(VARIANTS[1:])
    (OUT / "heatmap_cr-hero.json").write_text(json.dumps(heatmap()) + "\n")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Writes crates/core/data/rts96.case: a three-area, 73-bus network with the
RTS-96 area layout, 99 controllable units and 9 wind farms.

Reactances follow the single-area 24-bus reliability test system; thermal
limits, unit costs and wind placement are chosen for this project and are
not taken from any published data set.
"""
import sys

BRANCHES = [  # from, to, reactance (p.u.), rating (MW)
    (1, 2, 0.0139, 175), (1, 3, 0.2112, 175), (1, 5, 0.0845, 175),
    (2, 4, 0.1267, 175), (2, 6, 0.1920, 175), (3, 9, 0.1190, 175),
    (3, 24, 0.0839, 400), (4, 9, 0.1037, 175), (5, 10, 0.0883, 175),
    (6, 10, 0.0605, 175), (7, 8, 0.0614, 175), (8, 9, 0.1651, 175),
    (8, 10, 0.1651, 175), (9, 11, 0.0839, 400), (9, 12, 0.0839, 400),
    (10, 11, 0.0839, 400), (10, 12, 0.0839, 400), (11, 13, 0.0476, 500),
    (11, 14, 0.0418, 500), (12, 13, 0.0476, 500), (12, 23, 0.0966, 500),
    (13, 23, 0.0865, 500), (14, 16, 0.0389, 500), (15, 16, 0.0173, 500),
    (15, 21, 0.0490, 500), (15, 21, 0.0490, 500), (15, 24, 0.0519, 500),
    (16, 17, 0.0259, 500), (16, 19, 0.0231, 500), (17, 18, 0.0144, 500),
    (17, 22, 0.1053, 500), (18, 21, 0.0259, 500), (18, 21, 0.0259, 500),
    (19, 20, 0.0396, 500), (19, 20, 0.0396, 500), (20, 23, 0.0216, 500),
    (20, 23, 0.0216, 500), (21, 22, 0.0678, 500),
]
assert len(BRANCHES) == 38

# (area, bus) pairs; bus 25 of area 3 is the extra interconnection bus.
# Bus 7 of every area gets a tie so that no generator bus hangs on a
# single line.
TIES = [
    ((1, 7), (2, 7), 0.1610, 500), ((3, 7), (2, 15), 0.0750, 500),
    ((1, 23), (2, 17), 0.0970, 500), ((1, 21), (3, 25), 0.1010, 500),
    ((2, 23), (3, 18), 0.1060, 500), ((3, 25), (3, 23), 0.1010, 500),
]

LOADS = {1: 108, 2: 97, 3: 180, 4: 74, 5: 71, 6: 136, 7: 125, 8: 171, 9: 175,
         10: 195, 13: 265, 14: 194, 15: 317, 16: 100, 18: 333, 19: 181, 20: 128}

UNITS = {  # name: (g_min, g_max, cost)
    "U10": (0.0, 10.0, 150.0), "U12": (2.4, 12.0, 56.0), "U20": (16.0, 20.0, 130.0),
    "U50": (10.0, 50.0, 1.0), "U76": (15.2, 76.0, 17.0), "U100": (25.0, 100.0, 45.0),
    "U155": (54.3, 155.0, 14.0), "U197": (69.0, 197.0, 40.0), "U350": (140.0, 350.0, 13.0),
    "U400": (100.0, 400.0, 6.0),
}
PLANTS = [(1, ["U20", "U20", "U76", "U76"]), (2, ["U20", "U20", "U76", "U76"]),
          (7, ["U100"] * 3), (13, ["U197"] * 3), (14, ["U10"]),
          (15, ["U12"] * 5 + ["U155"]), (16, ["U155"]), (18, ["U400"]),
          (21, ["U400"]), (22, ["U50"] * 6), (23, ["U155", "U155", "U350"])]
WIND_BUSES = [3, 17, 19]
WIND_CAPACITY = 150.0
LIMIT_SCALE = 1.5


def idx(area, bus):
    return 72 if (area, bus) == (3, 25) else (area - 1) * 24 + (bus - 1)


def main(path):
    out = ["# three-area 73-bus network with RTS-96 branch layout",
           "# generated by scripts/make_rts96_case.py", "BUS"]
    for i in range(73):
        area, bus = (3, 25) if i == 72 else (i // 24 + 1, i % 24 + 1)
        load = LOADS.get(bus, 0) if i != 72 else 0
        out.append(f"{i} {1 if load else 0} {load}")
    out.append("LINE")
    lid = 0
    for area in (1, 2, 3):
        for f, t, x, rate in BRANCHES:
            out.append(f"{lid} {idx(area, f)} {idx(area, t)} {round(1 / x, 4)} "
                       f"{rate * LIMIT_SCALE:g} 0.0005 5")
            lid += 1
    for (fa, fb), (ta, tb), x, rate in TIES:
        out.append(f"{lid} {idx(fa, fb)} {idx(ta, tb)} {round(1 / x, 4)} "
                   f"{rate * LIMIT_SCALE:g} 0.0005 5")
        lid += 1
    assert lid == 120
    out.append("GEN")
    gid = 0
    for area in (1, 2, 3):
        for bus, units in PLANTS:
            for u in units:
                g_min, g_max, cost = UNITS[u]
                out.append(f"{gid} {idx(area, bus)} {g_min:g} {g_max:g} {cost:g}")
                gid += 1
    assert gid == 99
    out.append("WIND")
    wid = 0
    for area in (1, 2, 3):
        for bus in WIND_BUSES:
            out.append(f"{wid} {idx(area, bus)} {WIND_CAPACITY:g}")
            wid += 1
    out.append("REF")
    out.append(f"{idx(1, 13)}")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "crates/core/data/rts96.case")

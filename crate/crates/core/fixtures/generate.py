#!/usr/bin/env python3
"""Regenerates the built-in scenario fixtures in this directory.

Every hourly series is built from symmetric pairs (mean + d, mean - d), so the
24-sample mean equals the target value exactly in decimal.
"""

import math
from pathlib import Path

HERE = Path(__file__).parent
DAY = "2025-03-01"
PREV_DAY = "2025-02-28"

EU = {"France": 16, "Spain": 88, "Germany": 132, "GreatBritain": 213, "Italy": 335}
US = {"Washington": 244, "California": 235, "Texas": 231, "Florida": 570, "NewYork": 236, "Arizona": 229}
PUBLIC_NODES = {"Spain", "Texas"}

# service -> [(flavour, cpu millicores, ram MB)], preferred flavour first
SERVICES = {
    "Frontend": [("large", 1000, 1024), ("medium", 800, 768), ("tiny", 600, 512)],
    "Checkout": [("large", 500, 512), ("tiny", 400, 384)],
    "Recommendation": [("large", 500, 512), ("tiny", 400, 384)],
    "ProductCatalog": [("large", 500, 512), ("tiny", 400, 384)],
    "Ad": [("tiny", 200, 256)],
    "Cart": [("tiny", 300, 256)],
    "Shipping": [("tiny", 100, 128)],
    "Currency": [("tiny", 200, 256)],
    "Payment": [("tiny", 100, 128)],
    "Email": [("tiny", 100, 128)],
}
DESCRIPTIONS = {
    "Frontend": "Web frontend serving the shop pages",
    "Checkout": "Order placement and payment orchestration",
    "Recommendation": "Product recommendations",
    "ProductCatalog": "Product listing and search",
    "Ad": "Contextual text ads",
    "Cart": "Shopping cart storage",
    "Shipping": "Shipping cost quotes",
    "Currency": "Currency conversion",
    "Payment": "Card charging (mock)",
    "Email": "Order confirmation emails (mock)",
}

# Mean energy per hourly sample, kWh.
ENERGY = {
    ("Frontend", "large"): "1981.6",
    ("Frontend", "medium"): "1585",
    ("Frontend", "tiny"): "1189",
    ("Checkout", "large"): "134",
    ("Checkout", "tiny"): "107",
    ("Recommendation", "large"): "539",
    ("Recommendation", "tiny"): "431",
    ("ProductCatalog", "large"): "884.5",
    ("ProductCatalog", "tiny"): "791",
    ("Ad", "tiny"): "251",
    ("Cart", "tiny"): "546",
    ("Shipping", "tiny"): "98",
    ("Currency", "tiny"): "881",
    ("Payment", "tiny"): "34",
    ("Email", "tiny"): "50",
}

# Optimised frontend release: only the new large build is monitored, the
# other frontend flavours are inferred from it.
ENERGY_S4 = {k: v for k, v in ENERGY.items() if k[0] != "Frontend"}
ENERGY_S4[("Frontend", "large")] = "481"
ENERGY_S4[("ProductCatalog", "large")] = "989"

# (source, source flavour, destination) -> (mean requests per hour, GB per request)
TRAFFIC = {
    ("Frontend", "large", "ProductCatalog"): (40360, "0.002"),
    ("Frontend", "large", "Currency"): (26880, "0.002"),
    ("Frontend", "large", "Cart"): (5000, "0.002"),
    ("Frontend", "large", "Recommendation"): (2500, "0.002"),
    ("Frontend", "large", "Ad"): (3000, "0.001"),
    ("Frontend", "large", "Shipping"): (800, "0.0005"),
    ("Frontend", "large", "Checkout"): (600, "0.001"),
    ("Checkout", "large", "Payment"): (600, "0.0005"),
    ("Checkout", "large", "Email"): (600, "0.0005"),
    ("Checkout", "large", "Shipping"): (600, "0.0005"),
    ("Checkout", "large", "Currency"): (1200, "0.0005"),
    ("Checkout", "large", "Cart"): (600, "0.001"),
    ("Checkout", "large", "ProductCatalog"): (1800, "0.001"),
    ("Recommendation", "large", "ProductCatalog"): (2500, "0.001"),
}
S5_FACTOR = 15000


def hours(day):
    return [f"{day}T{h:02d}:00:00Z" for h in range(24)]


def diurnal(mean, amplitude, decimals):
    """24 values with the exact decimal mean `mean` (a string or int)."""
    scale = 10**decimals
    m = round(float(mean) * scale)
    out = [0] * 24
    for h in range(12):
        d = round(amplitude * m * math.sin(2 * math.pi * (h + 0.5) / 24))
        out[h], out[h + 12] = m + d, m - d
    return [f"{v / scale:.{decimals}f}" if decimals else str(v) for v in out]


def write(name, header, rows):
    (HERE / name).write_text(header + "\n" + "".join(",".join(map(str, r)) + "\n" for r in rows))


def energy_csv(name, table):
    rows = []
    for (s, f), mean in sorted(table.items()):
        for t, v in zip(hours(DAY), diurnal(mean, 0.25, 2)):
            rows.append((s, f, t, v))
    write(name, "service,flavour,timestamp,energy_kwh", rows)


def traffic_csv(name, factor):
    rows = []
    for (s, f, d), (volume, size) in sorted(TRAFFIC.items()):
        for t, v in zip(hours(DAY), diurnal(volume * factor, 0.3, 0)):
            rows.append((s, f, d, t, v, size))
    write(name, "source,source_flavour,destination,timestamp,request_volume_per_hour,request_size_gb", rows)


def carbon_csv(name, table, days=(DAY,), overrides=None):
    rows = []
    for node, ci in table.items():
        for day in days:
            mean = (overrides or {}).get((node, day), ci)
            for t, v in zip(hours(day), diurnal(mean, 0.1, 1)):
                rows.append((node, t, v))
    write(name, "node,timestamp,ci_gco2_per_kwh", rows)


def app_yaml():
    lines = ["name: online-boutique", "services:"]
    for svc, flavours in SERVICES.items():
        lines += [
            f"  - componentID: {svc}",
            f"    description: {DESCRIPTIONS[svc]}",
            "    mustDeploy: true",
            f"    placement: {'Public' if svc == 'Frontend' else 'Private'}",
            "    flavours:",
        ]
        for i, (f, cpu, ram) in enumerate(flavours):
            lines += [
                f"      - id: {f}",
                f"        resources: {{cpu: {cpu}, ram: {ram}, storage: 1}}",
                f"        qos: {{availability: {0.99 - 0.01 * i:.2f}}}",
            ]
        lines.append(f"    flavoursOrder: [{', '.join(f for f, _, _ in flavours)}]")
    lines.append("links:")
    for s, f, d in TRAFFIC:
        lines.append(f"  - {{source: {s}, sourceFlavour: {f}, destination: {d}}}")
    (HERE / "app.yaml").write_text("\n".join(lines) + "\n")


def infra_yaml(name, nodes):
    lines = ["nodes:"]
    for i, node in enumerate(nodes):
        lines += [
            f"  - id: {node}",
            "    capabilities:",
            "      cpu: 16000",
            "      ram: 65536",
            "      storage: 500",
            "      bandwidthIn: 10000",
            "      bandwidthOut: 10000",
            "      availability: 0.999",
            "      security: [encryption, firewall]",
            f"      subnet: {'Public' if node in PUBLIC_NODES else 'Private'}",
            "    profile:",
            f"      cost: {0.05 + 0.01 * i:.2f}",
        ]
    (HERE / name).write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    app_yaml()
    infra_yaml("infra_eu.yaml", EU)
    infra_yaml("infra_us.yaml", US)
    energy_csv("energy.csv", ENERGY)
    energy_csv("energy_s4.csv", ENERGY_S4)
    traffic_csv("traffic.csv", 1)
    traffic_csv("traffic_s5.csv", S5_FACTOR)
    carbon_csv("carbon_eu.csv", EU)
    carbon_csv("carbon_us.csv", US)
    carbon_csv("carbon_eu_s3.csv", EU, days=(PREV_DAY, DAY), overrides={("France", DAY): 376})

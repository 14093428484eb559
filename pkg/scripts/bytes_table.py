"""Per-agent MB sent per epoch for a 0.27M-parameter model on 50k samples, ring, batch 32."""

from adagossip.harness import predicted_bytes_per_epoch

COMPRESSORS = ("none", "topk:0.9", "topk:0.99", "quant:8", "quant:4", "quant:2")


def main() -> None:
    print(f"{'agents':>6} " + " ".join(f"{c:>10}" for c in COMPRESSORS))
    for n in (16, 32):
        cells = [predicted_bytes_per_epoch(270_000, 50_000, n, 32, "ring", c) for c in COMPRESSORS]
        print(f"{n:>6} " + " ".join(f"{mb:>10.3f}" for mb in cells))


if __name__ == "__main__":
    main()

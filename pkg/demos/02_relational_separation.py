"""Train on data where only the view order carries the class signal.

Every class shares the same multiset of view vectors; classes differ only
in how those vectors are arranged around the ring. A pool-only baseline is
provably stuck at chance while the relational model separates the classes.
"""

from hrgenet import (
    Classifier,
    HrgeModel,
    SyntheticSpec,
    TrainConfig,
    evaluate_accuracy,
    generate_synthetic,
    split,
    train,
)


def main():
    spec = SyntheticSpec(num_classes=4, shapes_per_class=50, num_views=12,
                         dim=32, noise=0.1, kind="relational-order", seed=11)
    train_set, test_set = split(generate_synthetic(spec), 0.7, seed=5)
    cfg = TrainConfig(batch_size=16, epochs=30, learning_rate=1e-3,
                      weight_decay=1e-4, seed=3)
    for variant in ("baseline", "full"):
        model = HrgeModel(num_views=12, width=32, variant=variant, seed=1)
        classifier = Classifier(model.descriptor_length, 4, seed=2)
        log = train(model, classifier, train_set, cfg)
        acc, per_class = evaluate_accuracy(model, classifier, test_set)
        final = log.epoch_records()[-1]
        print(f"{variant:>8}: test acc {acc:.3f} (per-class {per_class:.3f}),"
              f" final train loss {final['loss']:.4f}")


if __name__ == "__main__":
    main()

"""CRF vs softmax output layer for each encoder on the chain corpus.

    python3 scripts/run_ablation.py --seeds 3 --epochs 12
"""

import argparse
import statistics
import warnings

from contract_tagger.encoders import EncoderConfig
from contract_tagger.model import FeatureConfig, TrainConfig
from contract_tagger.synthetic import SyntheticSpec, generate_synthetic
from contract_tagger.training import evaluate_model, train

ENCODERS = (("bilstm", 1), ("dilated_cnn", 2), ("transformer", 1))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--epochs", type=int, default=12)
    ap.add_argument("--units", type=int, default=32)
    ap.add_argument("--n-train", type=int, default=600)
    ap.add_argument("--corpus-seed", type=int, default=21)
    args = ap.parse_args()
    warnings.filterwarnings("ignore", message="encoder layers=")

    data = generate_synthetic(SyntheticSpec(seed=args.corpus_seed, n_train=args.n_train, n_dev=150,
                                            n_test=300, kind="chain"))
    feats = FeatureConfig(word_dim=32, use_pos=False, use_shape=False)
    print(f"{'encoder':<12} {'output':<8} {'test macro-F1 per seed':<28} mean")
    for kind, layers in ENCODERS:
        for use_crf in (True, False):
            scores = []
            for seed in range(args.seeds):
                cfg = TrainConfig(encoder=EncoderConfig(kind, units=args.units, layers=layers),
                                  features=feats, use_crf=use_crf, batch_size=16, dropout=0.2,
                                  lr=3e-3, max_epochs=args.epochs, patience=4, seed=seed)
                model, _ = train(cfg, data["train"], data["dev"])
                scores.append(evaluate_model(model, data["test"]).macro_f1)
            cells = " ".join(f"{s:.3f}" for s in scores)
            print(f"{kind:<12} {'crf' if use_crf else 'softmax':<8} {cells:<28} {statistics.mean(scores):.3f}")


if __name__ == "__main__":
    main()

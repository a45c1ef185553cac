#!/usr/bin/env python3
"""Accuracy of a supervised model on its own session, a held-out draw, and every other session.

    python scripts/domain_gap.py --train-session 0 --epochs 50
"""

import argparse

from owdl import neuralnet as nn
from owdl.worldgen import WorldConfig, generate_session_samples


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--train-session", type=int, default=0)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--hidden", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    world = WorldConfig(seed=args.seed)
    pool = generate_session_samples(world, args.train_session, 150, None)
    train = [s for i, s in enumerate(pool) if i % 150 < 100]
    held = [s for i, s in enumerate(pool) if i % 150 >= 100]
    net = nn.init_network((world.embedding_dim, args.hidden, world.num_classes), args.seed)
    net = nn.train_supervised(net, train, nn.TrainConfig(epochs=args.epochs, seed=args.seed))

    print("session,top1")
    print(f"{args.train_session} (held-out draw),{nn.accuracy(net, held):.4f}")
    for sess in range(world.num_sessions):
        if sess != args.train_session:
            print(f"{sess},{nn.accuracy(net, generate_session_samples(world, sess, 20, None)):.4f}", flush=True)


if __name__ == "__main__":
    main()

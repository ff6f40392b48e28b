"""RBM-guided shallow disentangled UCC ansatz construction."""

"""Training objectives: hierarchical KL, top-k masking, ELBO and GECO."""

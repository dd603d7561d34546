"""On-disk formats: tensor archives, run configuration files and panels."""

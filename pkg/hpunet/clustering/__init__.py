"""Instance segmentation from sample stacks."""

"""Learn, memorize, recall, reduce: a desk-scale robotic video cloud."""

"""Agreement detection: mention extraction, features, classifier, pipeline."""

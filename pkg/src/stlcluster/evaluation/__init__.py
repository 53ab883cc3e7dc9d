"""Controller metrics and artifact formatting."""

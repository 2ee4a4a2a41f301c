"""Birkhoff-type integration against vector measures and a Girsanov-type change of measure."""

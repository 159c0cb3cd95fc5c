"""Instance I/O, report emission and the command registry."""

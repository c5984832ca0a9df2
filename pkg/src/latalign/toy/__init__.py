"""Toy teacher-forced seq2seq harness."""

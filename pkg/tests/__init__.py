"""Test suite for the pertloss library and CLI"""

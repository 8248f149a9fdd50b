# This file makes the tests directory a python package

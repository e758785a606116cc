"""Numerical study of a porous medium equation with nonlocal boundary flux."""

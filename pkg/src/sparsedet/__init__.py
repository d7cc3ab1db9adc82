"""Obstacle boxes from sparse lidar."""

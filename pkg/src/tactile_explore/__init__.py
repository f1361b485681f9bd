"""Active tactile object recognition in a simulated grid world."""

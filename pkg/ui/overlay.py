"""
UI Overlay
----------
Draws probability heatmaps, class maps and CAM attention regions over RGB images.
"""

import cv2
import numpy as np


# RGB colour per class index: NC, GG3, GG4, GG5
CLASS_COLORS = np.array([
    (200, 200, 200),  # NC
    (0, 180, 0),      # GG3
    (0, 90, 255),     # GG4
    (230, 0, 0),      # GG5
], dtype=np.uint8)


class Overlay:
    def __init__(self, alpha=0.4):
        self.alpha = alpha

    def heatmap(self, values):
        """Values in [0, 1] rendered with the JET colour map, returned as RGB."""
        scaled = np.clip(np.rint(np.asarray(values, dtype=np.float64) * 255), 0, 255).astype(np.uint8)
        colored = cv2.applyColorMap(scaled, cv2.COLORMAP_JET)
        return cv2.cvtColor(colored, cv2.COLOR_BGR2RGB)

    def blend(self, image, layer, where=None):
        image = np.ascontiguousarray(image, dtype=np.uint8)
        mixed = cv2.addWeighted(np.ascontiguousarray(layer, dtype=np.uint8), self.alpha, image, 1 - self.alpha, 0)
        if where is None:
            return mixed
        out = image.copy()
        out[where] = mixed[where]
        return out

    def draw_probability(self, image, probability, tissue=None):
        return self.blend(image, self.heatmap(probability), tissue)

    def draw_classmap(self, image, class_raster, tissue):
        colored = CLASS_COLORS[np.clip(class_raster, 0, len(CLASS_COLORS) - 1)]
        return self.blend(image, colored, np.asarray(tissue, dtype=bool))

    def draw_cam(self, image, heatmap, mask):
        """Heatmap over the patch with the high-attention region outlined in white."""
        frame = self.blend(image, self.heatmap(heatmap))
        contours, _ = cv2.findContours(mask.astype(np.uint8), cv2.RETR_EXTERNAL, cv2.CHAIN_APPROX_SIMPLE)
        cv2.drawContours(frame, contours, -1, (255, 255, 255), 1)
        return frame

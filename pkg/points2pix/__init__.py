# Points2Pix: point clouds to images with a conditional GAN

__version__ = "1.0.0"

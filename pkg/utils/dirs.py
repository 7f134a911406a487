import os
import logging


def create_dirs(dirs):
    """
    dirs - a list of directories to create if these directories are not found
    :param dirs:
    :return:
    """
    for dir_ in dirs:
        try:
            os.makedirs(dir_, exist_ok=True)
        except OSError as err:
            logging.getLogger("Dirs Creator").error("Creating directory %s failed: %s", dir_, err)
            raise

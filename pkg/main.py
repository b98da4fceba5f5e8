from dotenv import load_dotenv

from src.cli.app import run


if __name__ == "__main__":
    load_dotenv()
    run()
